#include "polydeform/geometry/contour.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "polydeform/error.hpp"

namespace polydeform::geometry {
namespace {

// Neighbour directions, counterclockwise as displayed (rows grow downward):
// E, NE, N, NW, W, SW, S, SE.
constexpr int kDr[8] = {0, -1, -1, -1, 0, 1, 1, 1};
constexpr int kDc[8] = {1, 1, 0, -1, -1, -1, 0, 1};

int direction_of(int dr, int dc) {
  for (int d = 0; d < 8; ++d) {
    if (kDr[d] == dr && kDc[d] == dc) return d;
  }
  return -1;
}

// Label image with a one-pixel zero frame, as the border follower expects.
class FramedLabels {
 public:
  explicit FramedLabels(const BinaryMask& mask)
      : rows_(mask.height() + 2), cols_(mask.width() + 2),
        f_(static_cast<std::size_t>(rows_) * cols_, 0) {
    for (int r = 0; r < mask.height(); ++r) {
      for (int c = 0; c < mask.width(); ++c) {
        if (mask.at(r, c)) at(r + 1, c + 1) = 1;
      }
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::int32_t& at(int r, int c) { return f_[static_cast<std::size_t>(r) * cols_ + c]; }

 private:
  int rows_;
  int cols_;
  std::vector<std::int32_t> f_;
};

}  // namespace

std::vector<PixelChain> trace_outer_borders(const BinaryMask& mask) {
  FramedLabels f(mask);
  std::vector<PixelChain> outers;
  std::int32_t nbd = 1;

  for (int i = 1; i < f.rows() - 1; ++i) {
    for (int j = 1; j < f.cols() - 1; ++j) {
      const std::int32_t v = f.at(i, j);
      if (v == 0) continue;

      const bool outer = v == 1 && f.at(i, j - 1) == 0;
      const bool hole = !outer && v >= 1 && f.at(i, j + 1) == 0;
      if (!outer && !hole) continue;

      ++nbd;
      PixelChain chain;
      const int start_dir = outer ? 4 : 0;

      // Clockwise search from (i2, j2) for the first nonzero neighbour.
      int first_dir = -1;
      for (int k = 0; k < 8; ++k) {
        const int d = (start_dir - k + 8) % 8;
        if (f.at(i + kDr[d], j + kDc[d]) != 0) {
          first_dir = d;
          break;
        }
      }

      if (first_dir < 0) {
        f.at(i, j) = -nbd;
        chain.push_back({i - 1, j - 1});
      } else {
        const int i1 = i + kDr[first_dir];
        const int j1 = j + kDc[first_dir];
        int i2 = i1, j2 = j1;
        int i3 = i, j3 = j;
        while (true) {
          // Counterclockwise search around (i3, j3) starting after (i2, j2).
          const int prev_dir = direction_of(i2 - i3, j2 - j3);
          bool east_zero_examined = false;
          int next_dir = -1;
          for (int k = 1; k <= 8; ++k) {
            const int d = (prev_dir + k) % 8;
            if (f.at(i3 + kDr[d], j3 + kDc[d]) != 0) {
              next_dir = d;
              break;
            }
            if (d == 0) east_zero_examined = true;
          }
          if (east_zero_examined) {
            f.at(i3, j3) = -nbd;
          } else if (f.at(i3, j3) == 1) {
            f.at(i3, j3) = nbd;
          }
          chain.push_back({i3 - 1, j3 - 1});

          const int i4 = i3 + kDr[next_dir];
          const int j4 = j3 + kDc[next_dir];
          if (i4 == i && j4 == j && i3 == i1 && j3 == j1) break;
          i2 = i3;
          j2 = j3;
          i3 = i4;
          j3 = j4;
        }
      }
      if (outer) outers.push_back(std::move(chain));
    }
  }
  return outers;
}

double chain_length(const PixelChain& chain) {
  if (chain.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < chain.size(); ++k) {
    total += distance(chain[k].center(), chain[(k + 1) % chain.size()].center());
  }
  return total;
}

Polygon resample_contour(const PixelChain& chain, double spacing) {
  if (!(spacing >= 1.0)) {
    throw ContractError("resample_contour: spacing must be >= 1, got " + std::to_string(spacing));
  }
  if (chain.size() < 3) {
    throw DegenerateError("resample_contour: contour has " + std::to_string(chain.size()) +
                          " points, need at least 3");
  }

  const std::size_t n = chain.size();
  std::vector<double> cum(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) {
    cum[k] = cum[k - 1] + distance(chain[k - 1].center(), chain[k].center());
  }
  const double total = cum[n - 1] + distance(chain[n - 1].center(), chain[0].center());

  auto pick_thirds = [&]() {
    std::vector<std::size_t> idx;
    for (int t = 0; t < 3; ++t) {
      const double target = total * t / 3.0;
      std::size_t best = 0;
      double best_err = std::numeric_limits<double>::infinity();
      for (std::size_t k = idx.empty() ? 0 : idx.back() + 1; k < n; ++k) {
        const double err = std::abs(cum[k] - target);
        if (err < best_err) {
          best_err = err;
          best = k;
        }
      }
      // Later targets must land on later points; n >= 3 leaves room.
      const std::size_t floor_idx = idx.empty() ? 0 : idx.back() + 1;
      const std::size_t ceil_idx = n - (3 - static_cast<std::size_t>(t));
      idx.push_back(std::clamp(best, floor_idx, ceil_idx));
    }
    return idx;
  };

  std::vector<std::size_t> idx;
  if (spacing * 3.0 > total) {
    idx = pick_thirds();
  } else {
    idx.push_back(0);
    std::size_t cur = 0;
    while (true) {
      // The point whose arc distance from the current vertex is closest to
      // spacing; steps are at most sqrt(2) so the error stays below 0.71.
      std::size_t best = n;
      double best_err = std::numeric_limits<double>::infinity();
      for (std::size_t k = cur + 1; k < n; ++k) {
        const double d = cum[k] - cum[cur];
        const double err = std::abs(d - spacing);
        if (err < best_err) {
          best_err = err;
          best = k;
        }
        if (d > spacing + 2.0) break;
      }
      if (best == n || cum[best] - cum[cur] < spacing - 1.0) break;
      if (total - cum[best] < 0.5 * spacing) break;
      idx.push_back(best);
      cur = best;
    }
    if (idx.size() < 3) idx = pick_thirds();
  }

  std::vector<Vec2> vertices;
  vertices.reserve(idx.size());
  for (std::size_t k : idx) vertices.push_back(chain[k].center());
  return Polygon(std::move(vertices));
}

std::vector<Polygon> extract_polygons(const BinaryMask& mask, double spacing) {
  if (!(spacing >= 1.0)) {
    throw ContractError("extract_polygons: spacing must be >= 1, got " + std::to_string(spacing));
  }
  std::vector<Polygon> out;
  for (const PixelChain& chain : trace_outer_borders(mask)) {
    PixelChain distinct = chain;
    std::sort(distinct.begin(), distinct.end(), [](Pixel a, Pixel b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) continue;

    if (chain_length(chain) < 3.0 * spacing) {
      std::vector<Vec2> vertices;
      vertices.reserve(chain.size());
      for (const Pixel& p : chain) vertices.push_back(p.center());
      out.emplace_back(std::move(vertices));
    } else {
      out.push_back(resample_contour(chain, spacing));
    }
  }
  return out;
}

}  // namespace polydeform::geometry
