#include "polydeform/geometry/box_ops.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "polydeform/error.hpp"

namespace polydeform::geometry {

Box fit_box(const BinaryMask& mask) {
  int rmin = mask.height(), rmax = -1, cmin = mask.width(), cmax = -1;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
  }
  if (rmax < 0) throw DegenerateError("fit_box: mask has no foreground pixels");
  return {static_cast<double>(cmin), static_cast<double>(rmin), static_cast<double>(cmax + 1),
          static_cast<double>(rmax + 1)};
}

Box polygon_bounds(const std::vector<Polygon>& polygons) {
  if (polygons.empty()) throw DegenerateError("polygon_bounds: no polygons");
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (const auto& p : polygons) {
    for (const auto& v : p.vertices()) {
      x0 = std::min(x0, v.x);
      y0 = std::min(y0, v.y);
      x1 = std::max(x1, v.x);
      y1 = std::max(y1, v.y);
    }
  }
  return {x0, y0, x1, y1};
}

Box clip_box(const Box& box, const Box& bounds) {
  return {std::clamp(box.x0, bounds.x0, bounds.x1), std::clamp(box.y0, bounds.y0, bounds.y1),
          std::clamp(box.x1, bounds.x0, bounds.x1), std::clamp(box.y1, bounds.y0, bounds.y1)};
}

Box expand_box(const Box& box, double frac, double px, const Box& bounds) {
  if (frac < -0.5) {
    throw ContractError("expand_box: frac must be >= -0.5, got " + std::to_string(frac));
  }
  const double dx = frac * box.width() / 2.0 + px;
  const double dy = frac * box.height() / 2.0 + px;
  return clip_box({box.x0 - dx, box.y0 - dy, box.x1 + dx, box.y1 + dy}, bounds);
}

double box_iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace polydeform::geometry
