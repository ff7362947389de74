#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "polydeform/autodiff/checkpoint.hpp"
#include "polydeform/autodiff/parameters.hpp"
#include "polydeform/geometry/types.hpp"
#include "polydeform/model/config.hpp"
#include "polydeform/model/deformer.hpp"
#include "polydeform/model/features.hpp"

namespace polydeform::model {

template <typename T>
struct DeformResult {
  Tensor<T> offsets;   // [N,2]
  Tensor<T> vertices;  // [N,2], input + offsets clamped to the crop
};

/// Feature extractor plus deformer sharing one parameter set. Not copyable:
/// the sub-networks hold handles into the parameter storage.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// He-normal convolutions, Xavier-uniform linear layers, zero biases,
  /// unit layer-norm gains and a zero output layer.
  void initialize(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const FeatureExtractor<T>& features() const { return features_; }
  const Deformer<T>& deformer() const { return deformer_; }

  /// crop [in_channels, S, S] -> fused map [C+2, S, S]
  Tensor<T> feature_map(Graph<T>& g, const Tensor<T>& crop) const { return features_.forward(g, crop); }

  /// vertices [N,2] in crop pixels.
  DeformResult<T> deform(Graph<T>& g, const Tensor<T>& fmap, const Tensor<T>& vertices,
                         AttentionTrace<T>* trace = nullptr) const;

 private:
  ModelConfig cfg_;
  ParameterSet<T> params_;
  FeatureExtractor<T> features_;
  Deformer<T> deformer_;
};

template <typename T>
Tensor<T> polygon_to_tensor(const geometry::Polygon& polygon, bool requires_grad = false);
template <typename T>
geometry::Polygon tensor_to_polygon(const Tensor<T>& vertices);

/// Manifest keys written by save_model: "architecture", "config_hash".
template <typename T>
autodiff::Checkpoint model_checkpoint(const Model<T>& model);
/// Throws CompatibilityError when `expected_hash` is non-empty and differs.
ModelConfig checkpoint_model_config(const autodiff::Checkpoint& ckpt, const std::string& expected_hash = "");

/// Builds a model from a checkpoint's architecture and restores its weights.
template <typename T>
std::unique_ptr<Model<T>> load_model(const autodiff::Checkpoint& ckpt, const std::string& expected_hash = "");

}  // namespace polydeform::model
