#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydeform/geometry/types.hpp"
#include "polydeform/io/image.hpp"

namespace polydeform::data {

using geometry::BinaryMask;
using geometry::Polygon;

enum class ShapeFamily : int { Ellipse = 0, Star = 1, RoundedRect = 2, Capsule = 3 };
inline constexpr int kNumClasses = 4;
const std::array<std::string, kNumClasses>& class_names();
/// Throws ValidationError for unknown names.
int class_id(const std::string& name);

struct SceneConfig {
  int height = 192;
  int width = 192;
  int min_instances = 3;
  int max_instances = 5;
  /// Range of the shape's larger extent in pixels.
  double min_size = 36.0;
  double max_size = 80.0;
  /// Chance that a scene receives full-length occluding strips.
  double occluder_probability = 0.3;
  int max_occluders = 2;
  double occluder_min_width = 4.0;
  double occluder_max_width = 9.0;
  double texture_amplitude = 0.06;
  double noise_sigma = 0.02;
  /// Visible components smaller than this are removed from the annotation.
  int min_component_pixels = 24;
  int min_visible_pixels = 200;

  void validate() const;
};

nlohmann::json to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);

struct SceneInstance {
  int label = 0;
  /// Visible (unoccluded) pixels in the image frame.
  BinaryMask mask{1, 1};
  /// One polygon per visible component, through boundary pixel centers.
  std::vector<Polygon> polygons;
};

struct SyntheticScene {
  std::uint64_t seed = 0;
  Image image;
  std::vector<SceneInstance> instances;
};

/// Deterministic in (seed, config). Shapes are composited back to front, so
/// later shapes and occluding strips hide earlier ones; instances are never
/// left with holes.
SyntheticScene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

/// Filled shape of a family at pixel resolution; exposed for tests.
BinaryMask render_shape(ShapeFamily family, double cx, double cy, double size, double aspect, double angle,
                        double param, int height, int width);

/// True when some background pixel is not 4-connected to the image border.
bool has_holes(const BinaryMask& mask);

/// Stateless 64-bit mixer used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace polydeform::data
