#include "polydeform/geometry/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "polydeform/error.hpp"

namespace polydeform::geometry {
namespace {

constexpr double kOnEdgeTol = 1e-9;

bool is_pixel_center(double v) {
  const double shifted = v - 0.5;
  return std::abs(shifted - std::round(shifted)) <= kOnEdgeTol;
}

void mark(BinaryMask& mask, double x, double y) {
  const int col = static_cast<int>(std::lround(x - 0.5));
  const int row = static_cast<int>(std::lround(y - 0.5));
  if (mask.in_bounds(row, col)) mask.set(row, col, true);
}

void fill_polygon(BinaryMask& mask, const Polygon& polygon) {
  const auto& v = polygon.vertices();
  const std::size_t n = v.size();

  double ymin = v[0].y, ymax = v[0].y;
  for (const auto& p : v) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const int row_lo = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
  const int row_hi = std::min(mask.height() - 1, static_cast<int>(std::ceil(ymax - 0.5)));

  std::vector<double> xs;
  for (int row = row_lo; row <= row_hi; ++row) {
    const double y = row + 0.5;
    xs.clear();
    for (std::size_t k = 0; k < n; ++k) {
      const Vec2& a = v[k];
      const Vec2& b = v[(k + 1) % n];
      // Half-open in y so shared vertices are counted once.
      if ((a.y <= y && y < b.y) || (b.y <= y && y < a.y)) {
        xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int c0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5 - kOnEdgeTol)));
      const int c1 =
          std::min(mask.width() - 1, static_cast<int>(std::floor(xs[k + 1] - 0.5 + kOnEdgeTol)));
      for (int col = c0; col <= c1; ++col) mask.set(row, col, true);
    }
  }

  // Boundary points the crossing rule skips: horizontal edges lying on a
  // scanline and vertices sitting exactly on pixel centers.
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2& a = v[k];
    const Vec2& b = v[(k + 1) % n];
    if (is_pixel_center(a.x) && is_pixel_center(a.y)) mark(mask, a.x, a.y);
    if (a.y == b.y && is_pixel_center(a.y)) {
      const int row = static_cast<int>(std::lround(a.y - 0.5));
      if (row < 0 || row >= mask.height()) continue;
      const double lo = std::min(a.x, b.x), hi = std::max(a.x, b.x);
      const int c0 = std::max(0, static_cast<int>(std::ceil(lo - 0.5 - kOnEdgeTol)));
      const int c1 = std::min(mask.width() - 1, static_cast<int>(std::floor(hi - 0.5 + kOnEdgeTol)));
      for (int col = c0; col <= c1; ++col) mask.set(row, col, true);
    }
  }
}

}  // namespace

BinaryMask rasterize_mask(const std::vector<Polygon>& polygons, int height, int width) {
  BinaryMask mask(height, width);
  for (const auto& p : polygons) fill_polygon(mask, p);
  return mask;
}

std::size_t edge_subdivisions(double length, double step) {
  if (!(step > 0.0)) {
    throw ContractError("edge sampling: step must be > 0, got " + std::to_string(step));
  }
  if (!std::isfinite(length)) throw NumericalError("edge sampling: non-finite edge length");
  const double count = std::ceil(length / step);
  return count < 1.0 ? 1 : static_cast<std::size_t>(count);
}

std::vector<EdgeSample> edge_sample_layout(const std::vector<Vec2>& vertices, double step) {
  std::vector<EdgeSample> layout;
  const std::size_t n = vertices.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t next = (k + 1) % n;
    const std::size_t count = edge_subdivisions(distance(vertices[k], vertices[next]), step);
    for (std::size_t s = 0; s < count; ++s) {
      layout.push_back({k, next, static_cast<double>(s) / static_cast<double>(count)});
    }
  }
  return layout;
}

std::vector<Vec2> sample_segment(Vec2 a, Vec2 b, double step) {
  const std::size_t count = edge_subdivisions(distance(a, b), step);
  std::vector<Vec2> out;
  out.reserve(count + 1);
  for (std::size_t s = 0; s <= count; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(count);
    out.push_back((1.0 - t) * a + t * b);
  }
  return out;
}

std::vector<Vec2> evaluate_samples(const std::vector<EdgeSample>& layout,
                                   const std::vector<Vec2>& vertices) {
  std::vector<Vec2> out;
  out.reserve(layout.size());
  for (const auto& s : layout) {
    out.push_back((1.0 - s.t) * vertices[s.from] + s.t * vertices[s.to]);
  }
  return out;
}

EdgePixelSet rasterize_edges(const Polygon& polygon, double step) {
  return {evaluate_samples(edge_sample_layout(polygon.vertices(), step), polygon.vertices())};
}

}  // namespace polydeform::geometry
