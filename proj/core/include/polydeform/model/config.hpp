#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace polydeform::model {

struct FeatureConfig {
  /// Square crop side; must be a power of two.
  int crop_size = 128;
  int in_channels = 3;
  /// Backbone stage widths; stage s has stride 2^(s+1).
  std::vector<int> stage_widths = {16, 32, 32, 64};
  /// Pyramid levels taken from the deepest stages.
  int levels = 3;
  int fpn_width = 32;
  /// Output width of the two per-level lateral convolutions.
  int lateral_width = 16;
  float input_mean = 0.5f;
  float input_std = 0.25f;

  int fused_channels() const { return levels * lateral_width; }
  /// Stride of pyramid level l (0 = finest).
  int level_stride(int l) const;
};

struct DeformerConfig {
  int layers = 6;
  int d_model = 64;
  int d_k = 64;
  int ffn_width = 128;
  int heads = 1;
  int head_hidden = 64;
  /// Fixed multiplier on the output head.
  float offset_scale = 1.0f;
};

struct ModelConfig {
  FeatureConfig features;
  DeformerConfig deformer;

  /// Throws ValidationError describing the first violated constraint.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys and bad values throw
/// ValidationError.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// FNV-1a 64 over the canonical JSON dump.
std::uint64_t fnv1a64(const std::string& text);
std::string config_hash(const ModelConfig& cfg);

/// Learnable scalar count implied by a configuration.
std::size_t expected_parameter_count(const ModelConfig& cfg);

}  // namespace polydeform::model
