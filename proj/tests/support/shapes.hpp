#pragma once

// Random test shapes shared by the unit tests and the acceptance binary.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "polydeform/geometry/types.hpp"

namespace polydeform::fixtures {

/// Smooth star-shaped blob: r(theta) = R * (1 + sum_k a_k cos(k theta + phi_k)),
/// harmonics 2..4 with total amplitude <= 0.3 so the narrowest feature stays
/// wide (>= 9px for R >= 16). Simply connected by construction.
inline geometry::BinaryMask random_blob(std::mt19937_64& rng, int size = 96) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double R = 16.0 + 14.0 * u(rng);
  const double cx = size / 2.0 + (u(rng) - 0.5) * 8.0;
  const double cy = size / 2.0 + (u(rng) - 0.5) * 8.0;
  double a[3], phi[3];
  for (int k = 0; k < 3; ++k) {
    a[k] = 0.1 * u(rng);
    phi[k] = 2 * std::numbers::pi * u(rng);
  }
  geometry::BinaryMask m(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double dx = c + 0.5 - cx, dy = r + 0.5 - cy;
      const double th = std::atan2(dy, dx);
      double rad = 1.0;
      for (int k = 0; k < 3; ++k) rad += a[k] * std::cos((k + 2) * th + phi[k]);
      m.set(r, c, std::hypot(dx, dy) <= R * rad);
    }
  return m;
}

inline geometry::BinaryMask filled_rect(int h, int w, int r0, int c0, int r1, int c1) {
  geometry::BinaryMask m(h, w);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m.set(r, c, true);
  return m;
}

inline geometry::Polygon regular_polygon(int n, double radius, geometry::Vec2 center = {0, 0}, double phase = 0) {
  std::vector<geometry::Vec2> v;
  for (int k = 0; k < n; ++k) {
    const double t = phase + 2 * std::numbers::pi * k / n;
    v.push_back({center.x + radius * std::cos(t), center.y + radius * std::sin(t)});
  }
  return geometry::Polygon(std::move(v));
}

/// Random simple polygon: sorted angles with jittered radii around a center.
inline geometry::Polygon random_polygon(std::mt19937_64& rng, int n, geometry::Vec2 center, double radius) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> angles;
  for (int k = 0; k < n; ++k) angles.push_back(2 * std::numbers::pi * (k + 0.8 * u(rng)) / n);
  std::vector<geometry::Vec2> v;
  for (double t : angles) {
    const double r = radius * (0.6 + 0.4 * u(rng));
    v.push_back({center.x + r * std::cos(t), center.y + r * std::sin(t)});
  }
  return geometry::Polygon(std::move(v));
}

}  // namespace polydeform::fixtures
