#include "polydeform/model/config.hpp"

#include <cstdio>
#include <set>

#include "polydeform/error.hpp"

namespace polydeform::model {
namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + "." + key + " has the wrong type");
  }
}

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

int FeatureConfig::level_stride(int l) const {
  const int stages = static_cast<int>(stage_widths.size());
  return 1 << (stages - levels + l + 1);
}

void ModelConfig::validate() const {
  const auto& f = features;
  const int stages = static_cast<int>(f.stage_widths.size());
  if (!power_of_two(f.crop_size)) throw ValidationError("features.crop_size must be a power of two");
  if (f.in_channels < 1) throw ValidationError("features.in_channels must be >= 1");
  if (stages < 1) throw ValidationError("features.stage_widths must not be empty");
  for (int w : f.stage_widths) {
    if (w < 1) throw ValidationError("features.stage_widths entries must be >= 1");
  }
  if (f.levels < 1 || f.levels > stages) throw ValidationError("features.levels must be in [1, stage count]");
  if ((f.crop_size >> stages) < 1) throw ValidationError("features.crop_size too small for the stage count");
  if (f.fpn_width < 1 || f.lateral_width < 1) throw ValidationError("features widths must be >= 1");
  if (!(f.input_std > 0)) throw ValidationError("features.input_std must be positive");

  const auto& d = deformer;
  if (d.layers < 1) throw ValidationError("deformer.layers must be >= 1");
  if (d.d_k < 1 || d.d_model < 1 || d.ffn_width < 1 || d.head_hidden < 1) {
    throw ValidationError("deformer widths must be >= 1");
  }
  if (d.heads < 1 || d.d_k % d.heads != 0 || d.d_model % d.heads != 0) {
    throw ValidationError("deformer.heads must divide d_k and d_model");
  }
  if (!(d.offset_scale > 0)) throw ValidationError("deformer.offset_scale must be positive");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  const auto& f = cfg.features;
  const auto& d = cfg.deformer;
  return {
      {"features",
       {{"crop_size", f.crop_size},
        {"in_channels", f.in_channels},
        {"stage_widths", f.stage_widths},
        {"levels", f.levels},
        {"fpn_width", f.fpn_width},
        {"lateral_width", f.lateral_width},
        {"input_mean", f.input_mean},
        {"input_std", f.input_std}}},
      {"deformer",
       {{"layers", d.layers},
        {"d_model", d.d_model},
        {"d_k", d.d_k},
        {"ffn_width", d.ffn_width},
        {"heads", d.heads},
        {"head_hidden", d.head_hidden},
        {"offset_scale", d.offset_scale}}},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  check_keys(j, {"features", "deformer"}, "model");
  if (j.contains("features")) {
    const auto& f = j.at("features");
    check_keys(f,
               {"crop_size", "in_channels", "stage_widths", "levels", "fpn_width", "lateral_width", "input_mean",
                "input_std"},
               "model.features");
    auto& o = cfg.features;
    read(f, "crop_size", o.crop_size, "model.features");
    read(f, "in_channels", o.in_channels, "model.features");
    read(f, "stage_widths", o.stage_widths, "model.features");
    read(f, "levels", o.levels, "model.features");
    read(f, "fpn_width", o.fpn_width, "model.features");
    read(f, "lateral_width", o.lateral_width, "model.features");
    read(f, "input_mean", o.input_mean, "model.features");
    read(f, "input_std", o.input_std, "model.features");
  }
  if (j.contains("deformer")) {
    const auto& d = j.at("deformer");
    check_keys(d, {"layers", "d_model", "d_k", "ffn_width", "heads", "head_hidden", "offset_scale"},
               "model.deformer");
    auto& o = cfg.deformer;
    read(d, "layers", o.layers, "model.deformer");
    read(d, "d_model", o.d_model, "model.deformer");
    read(d, "d_k", o.d_k, "model.deformer");
    read(d, "ffn_width", o.ffn_width, "model.deformer");
    read(d, "heads", o.heads, "model.deformer");
    read(d, "head_hidden", o.head_hidden, "model.deformer");
    read(d, "offset_scale", o.offset_scale, "model.deformer");
  }
  cfg.validate();
  return cfg;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash(const ModelConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(cfg).dump())));
  return buf;
}

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  const auto& f = cfg.features;
  const auto& d = cfg.deformer;
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
  auto lin = [](std::size_t in, std::size_t out) { return out * in + out; };

  std::size_t n = 0;
  std::size_t prev = static_cast<std::size_t>(f.in_channels);
  for (int w : f.stage_widths) {
    n += conv(prev, w, 3) + conv(w, w, 3);
    prev = static_cast<std::size_t>(w);
  }
  const int stages = static_cast<int>(f.stage_widths.size());
  for (int l = 0; l < f.levels; ++l) {
    const auto width = static_cast<std::size_t>(f.stage_widths[stages - f.levels + l]);
    n += conv(width, f.fpn_width, 1);                 // lateral 1x1
    n += conv(f.fpn_width, f.fpn_width, 3);           // smoothing
    n += conv(f.fpn_width, f.lateral_width, 3);       // fuse conv 1
    n += conv(f.lateral_width, f.lateral_width, 3);   // fuse conv 2
  }
  const std::size_t in = static_cast<std::size_t>(f.fused_channels()) + 2;
  n += lin(in, d.d_model);
  const std::size_t per_block = 2 * d.d_k * d.d_model      // Q, K (no bias)
                                + d.d_model * d.d_model    // V (no bias)
                                + lin(d.d_model, d.ffn_width) + lin(d.ffn_width, d.d_model)
                                + 4 * d.d_model;           // two layer norms
  n += per_block * static_cast<std::size_t>(d.layers);
  n += lin(d.d_model, d.head_hidden) + lin(d.head_hidden, 2);
  return n;
}

}  // namespace polydeform::model
