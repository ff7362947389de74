#include "polydeform/model/model.hpp"

#include <cmath>
#include <random>

#include "polydeform/autodiff/ops.hpp"
#include "polydeform/error.hpp"

namespace polydeform::model {

namespace ops = autodiff::ops;

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      params_(),
      features_(cfg_.features, params_),
      deformer_(cfg_.deformer, static_cast<std::size_t>(cfg_.features.fused_channels()) + 2, params_) {}

template <typename T>
void Model<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, tensor] : params_.entries()) {
    auto t = tensor;
    auto d = t.data();
    if (ends_with(name, ".gamma")) {
      std::fill(d.begin(), d.end(), T{1});
    } else if (ends_with(name, ".bias") || ends_with(name, ".beta") || name == "deformer.head.out.weight") {
      std::fill(d.begin(), d.end(), T{0});
    } else if (t.rank() == 4) {
      const double fan_in = static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3));
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : d) v = static_cast<T>(dist(rng));
    } else if (t.rank() == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : d) v = static_cast<T>(dist(rng));
    } else {
      throw ContractError("initialize: no rule for parameter " + name);
    }
  }
}

template <typename T>
DeformResult<T> Model<T>::deform(Graph<T>& g, const Tensor<T>& fmap, const Tensor<T>& vertices,
                                 AttentionTrace<T>* trace) const {
  if (vertices.rank() != 2 || vertices.dim(1) != 2 || vertices.dim(0) < 1) {
    throw ShapeError("deform: vertices must be [N,2], got " + autodiff::shape_string(vertices.shape()));
  }
  auto z = sample_vertex_embeddings(g, fmap, vertices);
  DeformResult<T> out;
  out.offsets = deformer_.offsets(g, z, trace);
  const T hi = static_cast<T>(cfg_.features.crop_size);
  out.vertices = ops::clamp(g, ops::add(g, vertices, out.offsets), T{0}, hi);
  return out;
}

template <typename T>
Tensor<T> polygon_to_tensor(const geometry::Polygon& polygon, bool requires_grad) {
  std::vector<T> data;
  data.reserve(polygon.size() * 2);
  for (const auto& v : polygon.vertices()) {
    data.push_back(static_cast<T>(v.x));
    data.push_back(static_cast<T>(v.y));
  }
  return Tensor<T>::from_data({polygon.size(), 2}, std::move(data), requires_grad);
}

template <typename T>
geometry::Polygon tensor_to_polygon(const Tensor<T>& vertices) {
  if (vertices.rank() != 2 || vertices.dim(1) != 2) {
    throw ShapeError("tensor_to_polygon: expected [N,2], got " + autodiff::shape_string(vertices.shape()));
  }
  std::vector<geometry::Vec2> pts;
  for (std::size_t i = 0; i < vertices.dim(0); ++i) {
    pts.push_back({static_cast<double>(vertices.data()[2 * i]), static_cast<double>(vertices.data()[2 * i + 1])});
  }
  return geometry::Polygon(std::move(pts));
}

template <typename T>
autodiff::Checkpoint model_checkpoint(const Model<T>& model) {
  autodiff::Checkpoint ckpt;
  ckpt.manifest["architecture"] = to_json(model.config());
  ckpt.manifest["config_hash"] = config_hash(model.config());
  autodiff::append_parameters(ckpt, model.params());
  return ckpt;
}

ModelConfig checkpoint_model_config(const autodiff::Checkpoint& ckpt, const std::string& expected_hash) {
  if (!ckpt.manifest.contains("architecture")) throw ValidationError("checkpoint: manifest lacks 'architecture'");
  auto cfg = model_config_from_json(ckpt.manifest.at("architecture"));
  const auto actual = config_hash(cfg);
  if (ckpt.manifest.contains("config_hash") && ckpt.manifest.at("config_hash") != actual) {
    throw CompatibilityError("checkpoint: stored config hash does not match its architecture");
  }
  if (!expected_hash.empty() && expected_hash != actual) {
    throw CompatibilityError("checkpoint config hash " + actual + " does not match requested " + expected_hash);
  }
  return cfg;
}

template <typename T>
std::unique_ptr<Model<T>> load_model(const autodiff::Checkpoint& ckpt, const std::string& expected_hash) {
  auto model = std::make_unique<Model<T>>(checkpoint_model_config(ckpt, expected_hash));
  autodiff::restore_parameters(ckpt, model->params());
  return model;
}

template class Model<float>;
template class Model<double>;
template Tensor<float> polygon_to_tensor<float>(const geometry::Polygon&, bool);
template Tensor<double> polygon_to_tensor<double>(const geometry::Polygon&, bool);
template geometry::Polygon tensor_to_polygon(const Tensor<float>&);
template geometry::Polygon tensor_to_polygon(const Tensor<double>&);
template autodiff::Checkpoint model_checkpoint(const Model<float>&);
template autodiff::Checkpoint model_checkpoint(const Model<double>&);
template std::unique_ptr<Model<float>> load_model<float>(const autodiff::Checkpoint&, const std::string&);
template std::unique_ptr<Model<double>> load_model<double>(const autodiff::Checkpoint&, const std::string&);

}  // namespace polydeform::model
