#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydeform/data/scene.hpp"
#include "polydeform/geometry/types.hpp"
#include "polydeform/io/image.hpp"

namespace polydeform::data {

using geometry::Box;
using geometry::Vec2;

enum class Mode { Detection, Annotation };
enum class Provenance { ProposedBox, GtBox };

std::string to_string(Mode m);
std::string to_string(Provenance p);
/// Throws ValidationError for unknown names.
Mode parse_mode(const std::string& s);

struct AugmentConfig {
  int crop_size = 128;
  double vertex_spacing = 10.0;
  /// Per-side box jitter in training, as a fraction of the side length.
  double jitter_frac = 0.03;
  double test_expand_frac = 0.02;
  double annotation_expand_px = 5.0;
  double flip_probability = 0.5;
  /// Enlarge boxes to squares instead of stretching ("Hard" crops).
  bool square_crop = false;
  double min_box_iou = 0.5;

  void validate() const;
};

nlohmann::json to_json(const AugmentConfig& cfg);
AugmentConfig augment_config_from_json(const nlohmann::json& j);

/// Affine map between the image frame and a crop frame of size S:
/// u = (x - box.x0) * S / box.width, then optionally u -> S - u.
struct CropTransform {
  Box box;
  int size = 128;
  bool flipped = false;

  Vec2 to_crop(Vec2 p) const;
  Vec2 to_image(Vec2 p) const;
  geometry::Polygon to_crop(const geometry::Polygon& poly) const;
  geometry::Polygon to_image(const geometry::Polygon& poly) const;
};

struct TrainingSample {
  Image crop;
  std::vector<geometry::Polygon> init_polygons;  // crop frame
  std::vector<geometry::Polygon> gt_polygons;    // crop frame, clamped to [0, S]
  CropTransform transform;
  Mode mode = Mode::Detection;
  Provenance provenance = Provenance::ProposedBox;
  int label = 0;
  int instance_index = 0;
  /// IoU of the box the crop came from (before expansion) with the GT box.
  double box_iou = 0.0;
  /// False when the sample fails the box-IoU filter or yields no polygons.
  bool usable = true;
};

/// Builds the crop for one instance.
///
/// Box: the tight box of `init_mask` (proposed) or of the GT mask. Training
/// jitters each side by up to +/- jitter_frac of its length (detection mode);
/// otherwise detection boxes grow by test_expand_frac and annotation boxes by
/// annotation_expand_px per side. The crop is resized to crop_size with
/// bilinear sampling, initial polygons are extracted from the resized
/// init mask at vertex_spacing, and a training flip is applied with
/// flip_probability.
TrainingSample make_sample(const SyntheticScene& scene, int instance_index, const BinaryMask& init_mask, Mode mode,
                           Provenance provenance, bool training, const AugmentConfig& cfg, std::uint64_t seed);

/// Box used by inference for a mode (no jitter, no flip).
Box inference_box(const Box& tight, Mode mode, const AugmentConfig& cfg, int image_height, int image_width);

/// Mirrors a sample horizontally: image, polygons and transform.
TrainingSample flip_sample(const TrainingSample& s);

}  // namespace polydeform::data
