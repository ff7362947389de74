#include "polydeform/geometry/morphology.hpp"

#include <algorithm>
#include <deque>
#include <limits>

#include "polydeform/error.hpp"

namespace polydeform::geometry {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D lower envelope of parabolas; f holds squared distances along a line.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
          (2.0 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j]];
  }
}

void check_same(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(op) + ": mask dimensions differ");
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const BinaryMask& seeds) {
  const int h = seeds.height(), w = seeds.width();
  std::vector<double> grid(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) grid[static_cast<std::size_t>(r) * w + c] = seeds.at(r, c) ? 0 : kInf;
  }
  const int n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);

  f.resize(h);
  d.resize(h);
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) f[r] = grid[static_cast<std::size_t>(r) * w + c];
    edt_1d(f, d, v, z);
    for (int r = 0; r < h; ++r) grid[static_cast<std::size_t>(r) * w + c] = d[r];
  }
  f.resize(w);
  d.resize(w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) f[c] = grid[static_cast<std::size_t>(r) * w + c];
    edt_1d(f, d, v, z);
    for (int c = 0; c < w; ++c) grid[static_cast<std::size_t>(r) * w + c] = d[c];
  }
  return grid;
}

BinaryMask boundary_pixels(const BinaryMask& mask) {
  BinaryMask out(mask.height(), mask.width());
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      if (!mask.get_or_false(r - 1, c) || !mask.get_or_false(r + 1, c) ||
          !mask.get_or_false(r, c - 1) || !mask.get_or_false(r, c + 1)) {
        out.set(r, c, true);
      }
    }
  }
  return out;
}

namespace {

// Separable running max (dilate) or min (erode). Outside the image is
// background for dilation and foreground-neutral for erosion, i.e. erosion
// does not eat into objects touching the border.
BinaryMask square_filter(const BinaryMask& mask, int radius, bool dilate) {
  if (radius <= 0) return mask;
  const int h = mask.height(), w = mask.width();
  std::vector<std::uint8_t> tmp(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      bool acc = !dilate;
      for (int k = std::max(0, c - radius); k <= std::min(w - 1, c + radius); ++k) {
        acc = dilate ? (acc || mask.at(r, k)) : (acc && mask.at(r, k));
      }
      tmp[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  std::vector<std::uint8_t> out(tmp.size());
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) {
      bool acc = !dilate;
      for (int k = std::max(0, r - radius); k <= std::min(h - 1, r + radius); ++k) {
        const bool v = tmp[static_cast<std::size_t>(k) * w + c] != 0;
        acc = dilate ? (acc || v) : (acc && v);
      }
      out[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  return BinaryMask(h, w, std::move(out));
}

}  // namespace

BinaryMask dilate_square(const BinaryMask& mask, int radius) { return square_filter(mask, radius, true); }
BinaryMask erode_square(const BinaryMask& mask, int radius) { return square_filter(mask, radius, false); }

Components connected_components(const BinaryMask& mask) {
  const int h = mask.height(), w = mask.width();
  Components out;
  out.labels.assign(static_cast<std::size_t>(h) * w, 0);
  std::deque<Pixel> queue;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask.at(r, c) || out.labels[static_cast<std::size_t>(r) * w + c] != 0) continue;
      const int label = ++out.count;
      out.labels[static_cast<std::size_t>(r) * w + c] = label;
      queue.push_back({r, c});
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = p.row + dr, cc = p.col + dc;
            if (!mask.get_or_false(rr, cc)) continue;
            int& l = out.labels[static_cast<std::size_t>(rr) * w + cc];
            if (l == 0) {
              l = label;
              queue.push_back({rr, cc});
            }
          }
        }
      }
    }
  }
  return out;
}

namespace {
template <typename Fn>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, const char* op, Fn fn) {
  check_same(a, b, op);
  std::vector<std::uint8_t> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(a.data()[i] != 0, b.data()[i] != 0);
  return BinaryMask(a.height(), a.width(), std::move(out));
}
}  // namespace

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, "mask_and", [](bool x, bool y) { return x && y; });
}
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, "mask_or", [](bool x, bool y) { return x || y; });
}
BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, "mask_and_not", [](bool x, bool y) { return x && !y; });
}

}  // namespace polydeform::geometry
