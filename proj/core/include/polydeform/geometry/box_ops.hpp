#pragma once

#include <vector>

#include "polydeform/geometry/types.hpp"

namespace polydeform::geometry {

/// Tightest box around all foreground pixels; pixel (r, c) spans
/// [c, c+1) x [r, r+1). Throws DegenerateError on an empty mask.
Box fit_box(const BinaryMask& mask);

/// Tightest box around polygon vertices.
Box polygon_bounds(const std::vector<Polygon>& polygons);

/// Moves each side outward by frac * side / 2 + px, then clips to bounds.
Box expand_box(const Box& box, double frac, double px, const Box& bounds);

Box clip_box(const Box& box, const Box& bounds);

double box_iou(const Box& a, const Box& b);

}  // namespace polydeform::geometry
