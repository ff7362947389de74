#pragma once

#include <cstdint>
#include <optional>

#include <nlohmann/json.hpp>

#include "polydeform/geometry/types.hpp"

namespace polydeform::data {

using geometry::BinaryMask;

/// Degradations applied to a ground-truth mask to imitate an imperfect
/// segmentation: square dilation/erosion, smooth boundary jitter, and
/// occasional blobs and holes near the boundary.
struct CorruptionConfig {
  /// Radius drawn uniformly from [min_radius, max_radius]; negative erodes.
  int min_radius = -2;
  int max_radius = 4;
  /// Peak boundary displacement of the jitter field, in pixels.
  double jitter_amplitude = 2.5;
  /// Spacing of the jitter field's control grid, in pixels.
  double jitter_scale = 10.0;
  double blob_probability = 0.35;
  double hole_probability = 0.1;
  double blob_min_radius = 3.0;
  double blob_max_radius = 7.0;
  /// Accepted IoU band; disabled when enforce_band is false.
  double iou_min = 0.6;
  double iou_max = 0.9;
  bool enforce_band = true;
  int max_tries = 10;

  /// A configuration that leaves masks untouched.
  static CorruptionConfig none();
  void validate() const;
};

nlohmann::json to_json(const CorruptionConfig& cfg);
CorruptionConfig corruption_config_from_json(const nlohmann::json& j);

/// Single draw of the corruption process.
BinaryMask corrupt_once(const BinaryMask& gt, const CorruptionConfig& cfg, std::uint64_t seed);

/// Redraws until the mask is non-empty and its IoU with gt falls inside the
/// band, at most max_tries times; nullopt means the instance should be
/// skipped.
std::optional<BinaryMask> corrupt_mask(const BinaryMask& gt, const CorruptionConfig& cfg, std::uint64_t seed);

}  // namespace polydeform::data
