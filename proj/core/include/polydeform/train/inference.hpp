#pragma once

#include <optional>
#include <string>
#include <vector>

#include "polydeform/data/sample.hpp"
#include "polydeform/geometry/types.hpp"
#include "polydeform/io/image.hpp"
#include "polydeform/model/model.hpp"

namespace polydeform::train {

using geometry::BinaryMask;
using geometry::Box;
using geometry::Polygon;

/// A crop plus its polygons in crop coordinates.
struct Instance {
  Image crop;
  std::vector<Polygon> polygons;
  data::CropTransform transform;
  int label = 0;
  double score = 1.0;

  /// Polygons mapped back to the image frame.
  std::vector<Polygon> image_polygons() const;
};

/// Crops around `box` (or the mask's tight box) with the inference expansion
/// for `mode` and extracts the initial polygons from the resized mask.
Instance instance_from_mask(const Image& image, const BinaryMask& mask, data::Mode mode,
                            const data::AugmentConfig& augment, std::optional<Box> box = std::nullopt);

/// Same crop rule, with polygons given in the image frame. The tight box
/// defaults to the polygons' bounds.
Instance instance_from_polygons(const Image& image, const std::vector<Polygon>& polygons, data::Mode mode,
                                const data::AugmentConfig& augment, std::optional<Box> box = std::nullopt);

/// Deforms every polygon independently against one shared feature map.
/// Label, score and transform are preserved. Throws DegenerateError when the
/// instance has no polygons.
Instance deform_instance(const model::Model<float>& model, const Instance& instance);

}  // namespace polydeform::train
