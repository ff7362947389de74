#pragma once

#include <cstddef>
#include <vector>

#include "polydeform/geometry/types.hpp"

namespace polydeform::geometry {

/// A pixel is foreground iff its center lies inside some polygon under the
/// even-odd rule. Polygons are treated as closed sets: centers exactly on an
/// edge count as inside.
BinaryMask rasterize_mask(const std::vector<Polygon>& polygons, int height, int width);

/// Position of one edge sample as an affine combination of two vertices:
/// p = (1 - t) * v[from] + t * v[to].
struct EdgeSample {
  std::size_t from = 0;
  std::size_t to = 0;
  double t = 0.0;
};

/// Number of uniform sub-intervals for an edge of the given length.
std::size_t edge_subdivisions(double length, double step);

/// Parametric samples for every closed edge. Edge k contributes
/// edge_subdivisions(len_k, step) samples at t = s / count, so the endpoint
/// of one edge is the first sample of the next.
std::vector<EdgeSample> edge_sample_layout(const std::vector<Vec2>& vertices, double step);

/// Inclusive samples along a single segment, consecutive samples <= step apart.
std::vector<Vec2> sample_segment(Vec2 a, Vec2 b, double step);

EdgePixelSet rasterize_edges(const Polygon& polygon, double step = 1.0);

/// Evaluates a layout against concrete vertex positions.
std::vector<Vec2> evaluate_samples(const std::vector<EdgeSample>& layout,
                                   const std::vector<Vec2>& vertices);

}  // namespace polydeform::geometry
