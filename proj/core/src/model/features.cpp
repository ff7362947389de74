#include "polydeform/model/features.hpp"

#include "polydeform/autodiff/ops.hpp"
#include "polydeform/error.hpp"

namespace polydeform::model {

namespace ops = autodiff::ops;
using autodiff::Shape;

template <typename T>
Tensor<T> image_to_tensor(const Image& image, const FeatureConfig& cfg) {
  if (image.channels != cfg.in_channels) {
    throw ShapeError("image_to_tensor: image has " + std::to_string(image.channels) + " channels, model expects " +
                     std::to_string(cfg.in_channels));
  }
  const auto h = static_cast<std::size_t>(image.height), w = static_cast<std::size_t>(image.width);
  const auto c = static_cast<std::size_t>(image.channels);
  auto t = Tensor<T>::zeros({c, h, w});
  auto d = t.data();
  const T inv_std = T{1} / static_cast<T>(cfg.input_std);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t q = 0; q < w; ++q)
      for (std::size_t ch = 0; ch < c; ++ch) {
        d[(ch * h + r) * w + q] = (static_cast<T>(image.data[(r * w + q) * c + ch]) - static_cast<T>(cfg.input_mean)) * inv_std;
      }
  return t;
}

template <typename T>
Tensor<T> coord_channels(std::size_t height, std::size_t width) {
  auto t = Tensor<T>::zeros({2, height, width});
  auto d = t.data();
  for (std::size_t r = 0; r < height; ++r) {
    const T y = static_cast<T>(2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(height) - 1.0);
    for (std::size_t q = 0; q < width; ++q) {
      d[r * width + q] = static_cast<T>(2.0 * (static_cast<double>(q) + 0.5) / static_cast<double>(width) - 1.0);
      d[height * width + r * width + q] = y;
    }
  }
  return t;
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(const FeatureConfig& cfg, ParameterSet<T>& params) : cfg_(cfg) {
  auto make = [&](const std::string& name, int in, int out, int k, int stride) {
    Conv c;
    const auto o = static_cast<std::size_t>(out), i = static_cast<std::size_t>(in), kk = static_cast<std::size_t>(k);
    c.weight = params.add(name + ".weight", Tensor<T>::zeros({o, i, kk, kk}));
    c.bias = params.add(name + ".bias", Tensor<T>::zeros({o}));
    c.stride = stride;
    c.padding = k / 2;
    return c;
  };
  int prev = cfg.in_channels;
  for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    const int w = cfg.stage_widths[s];
    const std::string base = "backbone.stage" + std::to_string(s);
    stages_.emplace_back(make(base + ".conv0", prev, w, 3, 2), make(base + ".conv1", w, w, 3, 1));
    prev = w;
  }
  const int stages = static_cast<int>(cfg.stage_widths.size());
  for (int l = 0; l < cfg.levels; ++l) {
    const int w = cfg.stage_widths[static_cast<std::size_t>(stages - cfg.levels + l)];
    lateral_.push_back(make("fpn.lateral" + std::to_string(l), w, cfg.fpn_width, 1, 1));
    smooth_.push_back(make("fpn.smooth" + std::to_string(l), cfg.fpn_width, cfg.fpn_width, 3, 1));
  }
  for (int l = 0; l < cfg.levels; ++l) {
    const std::string base = "fuse.level" + std::to_string(l);
    fuse_.emplace_back(make(base + ".conv0", cfg.fpn_width, cfg.lateral_width, 3, 1),
                       make(base + ".conv1", cfg.lateral_width, cfg.lateral_width, 3, 1));
  }
}

template <typename T>
Tensor<T> FeatureExtractor<T>::apply(Graph<T>& g, const Conv& c, const Tensor<T>& x) const {
  return ops::conv2d(g, x, c.weight, c.bias, c.stride, c.padding);
}

template <typename T>
FeaturePyramid<T> FeatureExtractor<T>::encode(Graph<T>& g, const Tensor<T>& crop) const {
  const auto size = static_cast<std::size_t>(cfg_.crop_size);
  const Shape expected{static_cast<std::size_t>(cfg_.in_channels), size, size};
  if (crop.shape() != expected) {
    throw ShapeError("encode: crop has shape " + autodiff::shape_string(crop.shape()) + ", expected " +
                     autodiff::shape_string(expected));
  }
  std::vector<Tensor<T>> stage_out;
  Tensor<T> x = crop;
  for (const auto& [c0, c1] : stages_) {
    x = ops::relu(g, apply(g, c0, x));
    x = ops::relu(g, apply(g, c1, x));
    stage_out.push_back(x);
  }
  const int levels = cfg_.levels;
  const std::size_t first = stage_out.size() - static_cast<std::size_t>(levels);

  std::vector<Tensor<T>> merged(static_cast<std::size_t>(levels));
  for (int l = levels - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    auto lat = apply(g, lateral_[li], stage_out[first + li]);
    if (l < levels - 1) {
      auto up = ops::upsample_bilinear(g, merged[li + 1], lat.dim(1), lat.dim(2));
      lat = ops::add(g, lat, up);
    }
    merged[li] = lat;
  }
  FeaturePyramid<T> out;
  for (int l = 0; l < levels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    out.levels.push_back(apply(g, smooth_[li], merged[li]));
    out.strides.push_back(cfg_.level_stride(l));
  }
  return out;
}

template <typename T>
Tensor<T> FeatureExtractor<T>::fuse(Graph<T>& g, const FeaturePyramid<T>& pyramid) const {
  if (pyramid.levels.size() != fuse_.size()) {
    throw ShapeError("fuse: pyramid has " + std::to_string(pyramid.levels.size()) + " levels, expected " +
                     std::to_string(fuse_.size()));
  }
  const auto size = static_cast<std::size_t>(cfg_.crop_size);
  std::vector<Tensor<T>> parts;
  for (std::size_t l = 0; l < fuse_.size(); ++l) {
    auto x = ops::relu(g, apply(g, fuse_[l].first, pyramid.levels[l]));
    x = apply(g, fuse_[l].second, x);
    parts.push_back(ops::upsample_bilinear(g, x, size, size));
  }
  parts.push_back(coord_channels<T>(size, size));
  return ops::concat(g, parts);
}

template <typename T>
Tensor<T> sample_vertex_embeddings(Graph<T>& g, const Tensor<T>& fmap, const Tensor<T>& vertices) {
  return ops::grid_sample(g, fmap, vertices);
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;
template Tensor<float> image_to_tensor<float>(const Image&, const FeatureConfig&);
template Tensor<double> image_to_tensor<double>(const Image&, const FeatureConfig&);
template Tensor<float> coord_channels<float>(std::size_t, std::size_t);
template Tensor<double> coord_channels<double>(std::size_t, std::size_t);
template Tensor<float> sample_vertex_embeddings(Graph<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> sample_vertex_embeddings(Graph<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace polydeform::model
