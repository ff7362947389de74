#pragma once

// Independent reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "polydeform/geometry/types.hpp"

namespace polydeform::fixtures {

/// Edge samples written out directly: edge a->b of length L gets ceil(L/step)
/// points a + (s/count)(b - a), s = 0..count-1.
inline std::vector<geometry::Vec2> naive_edge_samples(const std::vector<geometry::Polygon>& polys, double step) {
  std::vector<geometry::Vec2> out;
  for (const auto& poly : polys) {
    const auto& v = poly.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto a = v[i];
      const auto b = v[(i + 1) % v.size()];
      const double len = std::hypot(b.x - a.x, b.y - a.y);
      const int count = std::max(1, static_cast<int>(std::ceil(len / step)));
      for (int s = 0; s < count; ++s) {
        const double t = static_cast<double>(s) / count;
        out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
      }
    }
  }
  return out;
}

/// O(|P||Q|) double-min Chamfer: mean nearest distance P->Q plus Q->P, with
/// terms below `mask_px` counted as zero.
inline double brute_force_chamfer(const std::vector<geometry::Polygon>& P, const std::vector<geometry::Polygon>& Q,
                                  double step, double mask_px) {
  const auto ps = naive_edge_samples(P, step);
  const auto qs = naive_edge_samples(Q, step);
  auto directed = [mask_px](const std::vector<geometry::Vec2>& from, const std::vector<geometry::Vec2>& to) {
    double total = 0;
    for (const auto& a : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : to) best = std::min(best, std::hypot(a.x - b.x, a.y - b.y));
      if (mask_px > 0 && best < mask_px) continue;
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return directed(ps, qs) + directed(qs, ps);
}

}  // namespace polydeform::fixtures
