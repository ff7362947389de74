#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "polydeform/autodiff/graph.hpp"
#include "polydeform/autodiff/parameters.hpp"
#include "polydeform/autodiff/tensor.hpp"
#include "polydeform/io/image.hpp"
#include "polydeform/model/config.hpp"

namespace polydeform::model {

using autodiff::Graph;
using autodiff::ParameterSet;
using autodiff::Tensor;

template <typename T>
struct FeaturePyramid {
  /// Finest first; level l is [fpn_width, crop/stride_l, crop/stride_l].
  std::vector<Tensor<T>> levels;
  std::vector<int> strides;
};

/// Image -> [C,H,W] tensor standardized with the configured mean/std.
template <typename T>
Tensor<T> image_to_tensor(const Image& image, const FeatureConfig& cfg);

/// Two parameter-free channels: x then y pixel-center ramps in [-1, 1].
template <typename T>
Tensor<T> coord_channels(std::size_t height, std::size_t width);

/// Conv backbone with a top-down pyramid, per-level lateral convolutions,
/// upsample-and-concat fusion and CoordConv.
template <typename T>
class FeatureExtractor {
 public:
  /// Registers parameters under "backbone.", "fpn." and "fuse.".
  FeatureExtractor(const FeatureConfig& cfg, ParameterSet<T>& params);

  /// crop: [in_channels, crop_size, crop_size], already standardized.
  FeaturePyramid<T> encode(Graph<T>& g, const Tensor<T>& crop) const;
  /// -> [levels * lateral_width + 2, crop_size, crop_size]
  Tensor<T> fuse(Graph<T>& g, const FeaturePyramid<T>& pyramid) const;
  Tensor<T> forward(Graph<T>& g, const Tensor<T>& crop) const { return fuse(g, encode(g, crop)); }

  std::size_t fused_channels() const { return static_cast<std::size_t>(cfg_.fused_channels()) + 2; }
  const FeatureConfig& config() const { return cfg_; }

 private:
  struct Conv {
    Tensor<T> weight;
    Tensor<T> bias;
    int stride = 1;
    int padding = 0;
  };
  Tensor<T> apply(Graph<T>& g, const Conv& c, const Tensor<T>& x) const;

  FeatureConfig cfg_;
  std::vector<std::pair<Conv, Conv>> stages_;
  std::vector<Conv> lateral_;
  std::vector<Conv> smooth_;
  std::vector<std::pair<Conv, Conv>> fuse_;
};

/// Row i is the bilinear sample of fmap at vertex i (vertices [N,2]).
template <typename T>
Tensor<T> sample_vertex_embeddings(Graph<T>& g, const Tensor<T>& fmap, const Tensor<T>& vertices);

}  // namespace polydeform::model
