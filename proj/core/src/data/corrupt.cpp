#include "polydeform/data/corrupt.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "polydeform/data/scene.hpp"
#include "polydeform/error.hpp"
#include "polydeform/geometry/morphology.hpp"
#include "polydeform/metrics/metrics.hpp"

namespace polydeform::data {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Signed distance to the mask boundary, positive inside.
std::vector<double> signed_distance(const BinaryMask& m) {
  BinaryMask inv(m.height(), m.width());
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c) inv.set(r, c, !m.at(r, c));
  const auto d_out = geometry::squared_distance_transform(m);   // distance to foreground
  const auto d_in = geometry::squared_distance_transform(inv);  // distance to background
  std::vector<double> sd(d_out.size());
  const double far = static_cast<double>(m.height() + m.width());
  for (std::size_t i = 0; i < sd.size(); ++i) {
    const double a = std::isfinite(d_in[i]) ? std::sqrt(d_in[i]) : far;
    const double b = std::isfinite(d_out[i]) ? std::sqrt(d_out[i]) : far;
    sd[i] = m.data()[i] ? a - 0.5 : -(b - 0.5);
  }
  return sd;
}

/// Bilinear value noise in [-1, 1] on a grid with the given spacing.
std::vector<double> value_noise(int h, int w, double spacing, Rng& rng) {
  const int gh = static_cast<int>(std::ceil(h / spacing)) + 2;
  const int gw = static_cast<int>(std::ceil(w / spacing)) + 2;
  std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
  for (auto& v : grid) v = uniform(rng, -1.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    const double gy = (r + 0.5) / spacing;
    const int y0 = static_cast<int>(gy);
    const double fy = gy - y0;
    for (int c = 0; c < w; ++c) {
      const double gx = (c + 0.5) / spacing;
      const int x0 = static_cast<int>(gx);
      const double fx = gx - x0;
      auto at = [&](int y, int x) { return grid[static_cast<std::size_t>(y) * gw + x]; };
      const double top = (1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1);
      const double bot = (1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1);
      out[static_cast<std::size_t>(r) * w + c] = (1 - fy) * top + fy * bot;
    }
  }
  return out;
}

void paint_disc(BinaryMask& m, double cx, double cy, double radius, bool value) {
  const int r0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int r1 = std::min(m.height() - 1, static_cast<int>(std::ceil(cy + radius)));
  const int c0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int c1 = std::min(m.width() - 1, static_cast<int>(std::ceil(cx + radius)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      if (std::hypot(c + 0.5 - cx, r + 0.5 - cy) <= radius) m.set(r, c, value);
    }
}

/// Random pixel of `m`'s boundary, or nullopt if there is none.
std::optional<geometry::Pixel> boundary_pixel(const BinaryMask& m, Rng& rng) {
  const auto b = geometry::boundary_pixels(m);
  const std::size_t n = b.count();
  if (n == 0) return std::nullopt;
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (int r = 0; r < b.height(); ++r)
    for (int c = 0; c < b.width(); ++c) {
      if (b.at(r, c) && pick-- == 0) return geometry::Pixel{r, c};
    }
  return std::nullopt;
}

}  // namespace

CorruptionConfig CorruptionConfig::none() {
  CorruptionConfig c;
  c.min_radius = 0;
  c.max_radius = 0;
  c.jitter_amplitude = 0.0;
  c.blob_probability = 0.0;
  c.hole_probability = 0.0;
  c.enforce_band = false;
  return c;
}

void CorruptionConfig::validate() const {
  if (max_radius < min_radius) throw ValidationError("corruption: max_radius < min_radius");
  if (!(jitter_amplitude >= 0) || !(jitter_scale > 0)) throw ValidationError("corruption: bad jitter settings");
  for (double p : {blob_probability, hole_probability}) {
    if (!(p >= 0 && p <= 1)) throw ValidationError("corruption: probabilities must be in [0,1]");
  }
  if (!(blob_min_radius > 0) || blob_max_radius < blob_min_radius) {
    throw ValidationError("corruption: bad blob radius range");
  }
  if (!(iou_min >= 0 && iou_max <= 1 && iou_min <= iou_max)) throw ValidationError("corruption: bad IoU band");
  if (max_tries < 1) throw ValidationError("corruption: max_tries must be >= 1");
}

nlohmann::json to_json(const CorruptionConfig& c) {
  return {{"min_radius", c.min_radius},
          {"max_radius", c.max_radius},
          {"jitter_amplitude", c.jitter_amplitude},
          {"jitter_scale", c.jitter_scale},
          {"blob_probability", c.blob_probability},
          {"hole_probability", c.hole_probability},
          {"blob_min_radius", c.blob_min_radius},
          {"blob_max_radius", c.blob_max_radius},
          {"iou_min", c.iou_min},
          {"iou_max", c.iou_max},
          {"enforce_band", c.enforce_band},
          {"max_tries", c.max_tries}};
}

CorruptionConfig corruption_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("corruption config must be a JSON object");
  auto merged = to_json(CorruptionConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!merged.contains(key)) throw ValidationError("corruption: unknown key '" + key + "'");
    if (merged[key].type() != value.type() && !(merged[key].is_number() && value.is_number())) {
      throw ValidationError("corruption." + key + " has the wrong type");
    }
    merged[key] = value;
  }
  CorruptionConfig c;
  c.min_radius = merged["min_radius"].get<int>();
  c.max_radius = merged["max_radius"].get<int>();
  c.jitter_amplitude = merged["jitter_amplitude"].get<double>();
  c.jitter_scale = merged["jitter_scale"].get<double>();
  c.blob_probability = merged["blob_probability"].get<double>();
  c.hole_probability = merged["hole_probability"].get<double>();
  c.blob_min_radius = merged["blob_min_radius"].get<double>();
  c.blob_max_radius = merged["blob_max_radius"].get<double>();
  c.iou_min = merged["iou_min"].get<double>();
  c.iou_max = merged["iou_max"].get<double>();
  c.enforce_band = merged["enforce_band"].get<bool>();
  c.max_tries = merged["max_tries"].get<int>();
  c.validate();
  return c;
}

BinaryMask corrupt_once(const BinaryMask& gt, const CorruptionConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  BinaryMask m = gt;
  const int radius = std::uniform_int_distribution<int>(cfg.min_radius, cfg.max_radius)(rng);
  if (radius > 0) m = geometry::dilate_square(m, radius);
  if (radius < 0) m = geometry::erode_square(m, -radius);

  if (cfg.jitter_amplitude > 0 && !m.empty()) {
    const auto sd = signed_distance(m);
    const auto noise = value_noise(m.height(), m.width(), cfg.jitter_scale, rng);
    BinaryMask j(m.height(), m.width());
    for (int r = 0; r < m.height(); ++r)
      for (int c = 0; c < m.width(); ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * m.width() + c;
        j.set(r, c, sd[i] + cfg.jitter_amplitude * noise[i] > 0.0);
      }
    m = std::move(j);
  }

  if (uniform(rng, 0.0, 1.0) < cfg.blob_probability) {
    if (auto p = boundary_pixel(m, rng)) {
      const double rad = uniform(rng, cfg.blob_min_radius, cfg.blob_max_radius);
      paint_disc(m, p->col + 0.5, p->row + 0.5, rad, true);
    }
  }
  if (uniform(rng, 0.0, 1.0) < cfg.hole_probability) {
    if (auto p = boundary_pixel(m, rng)) {
      const double rad = uniform(rng, cfg.blob_min_radius, cfg.blob_max_radius);
      paint_disc(m, p->col + 0.5, p->row + 0.5, rad, false);
    }
  }
  return m;
}

std::optional<BinaryMask> corrupt_mask(const BinaryMask& gt, const CorruptionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
    auto m = corrupt_once(gt, cfg, mix_seed(seed, static_cast<std::uint64_t>(attempt)));
    if (m.empty()) continue;
    if (cfg.enforce_band) {
      const double iou = metrics::mask_iou(m, gt);
      if (iou < cfg.iou_min || iou > cfg.iou_max) continue;
    }
    return m;
  }
  return std::nullopt;
}

}  // namespace polydeform::data
