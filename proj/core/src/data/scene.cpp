#include "polydeform/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <random>

#include "polydeform/error.hpp"
#include "polydeform/geometry/contour.hpp"
#include "polydeform/geometry/morphology.hpp"

namespace polydeform::data {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct Color {
  double c[3];
};

Color random_color(Rng& rng) { return {{uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)}}; }

/// Low-frequency texture: two oriented sinusoids.
struct Texture {
  double fx[2], fy[2], phase[2], amp;
  double operator()(double x, double y) const {
    return amp * 0.5 * (std::sin(fx[0] * x + fy[0] * y + phase[0]) + std::sin(fx[1] * x + fy[1] * y + phase[1]));
  }
};

Texture random_texture(Rng& rng, double amplitude) {
  Texture t{};
  for (int k = 0; k < 2; ++k) {
    const double freq = uniform(rng, 0.05, 0.35);
    const double ang = uniform(rng, 0.0, std::numbers::pi);
    t.fx[k] = freq * std::cos(ang);
    t.fy[k] = freq * std::sin(ang);
    t.phase[k] = uniform(rng, 0.0, 2 * std::numbers::pi);
  }
  t.amp = amplitude;
  return t;
}

struct Strip {
  double px, py, nx, ny, half_width;
  bool contains(double x, double y) const { return std::abs((x - px) * nx + (y - py) * ny) <= half_width; }
};

struct Placed {
  int family;
  BinaryMask full;
  Color color;
  Texture texture;
};

void remove_small_components(BinaryMask& mask, int min_pixels) {
  const auto comps = geometry::connected_components(mask);
  std::vector<int> sizes(static_cast<std::size_t>(comps.count) + 1, 0);
  for (int l : comps.labels) ++sizes[static_cast<std::size_t>(l)];
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      const int l = comps.labels[static_cast<std::size_t>(r) * mask.width() + c];
      if (l > 0 && sizes[static_cast<std::size_t>(l)] < min_pixels) mask.set(r, c, false);
    }
  }
}

}  // namespace

const std::array<std::string, kNumClasses>& class_names() {
  static const std::array<std::string, kNumClasses> names = {"ellipse", "star", "rounded_rect", "capsule"};
  return names;
}

int class_id(const std::string& name) {
  const auto& names = class_names();
  for (int i = 0; i < kNumClasses; ++i) {
    if (names[static_cast<std::size_t>(i)] == name) return i;
  }
  throw ValidationError("unknown class label '" + name + "'");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word.
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void SceneConfig::validate() const {
  if (height < 16 || width < 16) throw ValidationError("scene: image must be at least 16x16");
  if (min_instances < 0 || max_instances < min_instances) throw ValidationError("scene: bad instance count range");
  if (!(min_size >= 8) || max_size < min_size) throw ValidationError("scene: bad size range");
  if (!(occluder_probability >= 0 && occluder_probability <= 1)) {
    throw ValidationError("scene: occluder_probability must be in [0,1]");
  }
  if (max_occluders < 0 || !(occluder_min_width > 0) || occluder_max_width < occluder_min_width) {
    throw ValidationError("scene: bad occluder settings");
  }
  if (!(texture_amplitude >= 0) || !(noise_sigma >= 0)) throw ValidationError("scene: noise levels must be >= 0");
  if (min_component_pixels < 1 || min_visible_pixels < 1) throw ValidationError("scene: pixel floors must be >= 1");
}

nlohmann::json to_json(const SceneConfig& c) {
  return {{"height", c.height},
          {"width", c.width},
          {"min_instances", c.min_instances},
          {"max_instances", c.max_instances},
          {"min_size", c.min_size},
          {"max_size", c.max_size},
          {"occluder_probability", c.occluder_probability},
          {"max_occluders", c.max_occluders},
          {"occluder_min_width", c.occluder_min_width},
          {"occluder_max_width", c.occluder_max_width},
          {"texture_amplitude", c.texture_amplitude},
          {"noise_sigma", c.noise_sigma},
          {"min_component_pixels", c.min_component_pixels},
          {"min_visible_pixels", c.min_visible_pixels}};
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("scene config must be a JSON object");
  SceneConfig c;
  auto defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ValidationError("scene: unknown key '" + key + "'");
    if (!value.is_number()) throw ValidationError("scene." + key + " must be a number");
    defaults[key] = value;
  }
  try {
    c.height = defaults["height"].get<int>();
    c.width = defaults["width"].get<int>();
    c.min_instances = defaults["min_instances"].get<int>();
    c.max_instances = defaults["max_instances"].get<int>();
    c.min_size = defaults["min_size"].get<double>();
    c.max_size = defaults["max_size"].get<double>();
    c.occluder_probability = defaults["occluder_probability"].get<double>();
    c.max_occluders = defaults["max_occluders"].get<int>();
    c.occluder_min_width = defaults["occluder_min_width"].get<double>();
    c.occluder_max_width = defaults["occluder_max_width"].get<double>();
    c.texture_amplitude = defaults["texture_amplitude"].get<double>();
    c.noise_sigma = defaults["noise_sigma"].get<double>();
    c.min_component_pixels = defaults["min_component_pixels"].get<int>();
    c.min_visible_pixels = defaults["min_visible_pixels"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scene config: ") + e.what());
  }
  c.validate();
  return c;
}

BinaryMask render_shape(ShapeFamily family, double cx, double cy, double size, double aspect, double angle,
                        double param, int height, int width) {
  BinaryMask m(height, width);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double half = size / 2;
  // Family parameters.
  const int star_points = 5 + static_cast<int>(param * 3.0) % 3;
  const double star_k = 0.16 + 0.12 * std::fmod(param * 3.0, 1.0);
  const double star_r = half / (1 + star_k);
  const double ra = half, rb = half * aspect;
  const double corner = (0.15 + 0.3 * param) * std::min(ra, rb);
  const double cap_r = half * std::clamp(aspect, 0.2, 0.8) * 0.6;
  const double cap_l = half - cap_r;

  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double dx = c + 0.5 - cx, dy = r + 0.5 - cy;
      const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
      bool inside = false;
      switch (family) {
        case ShapeFamily::Ellipse:
          inside = (u * u) / (ra * ra) + (v * v) / (rb * rb) <= 1.0;
          break;
        case ShapeFamily::Star: {
          const double rho = std::hypot(u, v);
          const double phi = std::atan2(v, u);
          inside = rho <= star_r * (1 + star_k * std::cos(star_points * phi));
          break;
        }
        case ShapeFamily::RoundedRect: {
          const double qx = std::abs(u) - ra + corner, qy = std::abs(v) - rb + corner;
          const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
          inside = outside + std::min(std::max(qx, qy), 0.0) - corner <= 0.0;
          break;
        }
        case ShapeFamily::Capsule: {
          const double t = std::clamp(u, -cap_l, cap_l);
          inside = std::hypot(u - t, v) <= cap_r;
          break;
        }
      }
      if (inside) m.set(r, c, true);
    }
  }
  return m;
}

bool has_holes(const BinaryMask& mask) {
  const int h = mask.height(), w = mask.width();
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(h) * w, 0);
  std::deque<std::pair<int, int>> queue;
  auto push = [&](int r, int c) {
    if (r < 0 || c < 0 || r >= h || c >= w) return;
    auto& s = seen[static_cast<std::size_t>(r) * w + c];
    if (s || mask.at(r, c)) return;
    s = 1;
    queue.emplace_back(r, c);
  };
  for (int c = 0; c < w; ++c) {
    push(0, c);
    push(h - 1, c);
  }
  for (int r = 0; r < h; ++r) {
    push(r, 0);
    push(r, w - 1);
  }
  while (!queue.empty()) {
    const auto [r, c] = queue.front();
    queue.pop_front();
    push(r - 1, c);
    push(r + 1, c);
    push(r, c - 1);
    push(r, c + 1);
  }
  const auto d = mask.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d[i] && !seen[i]) return true;
  }
  return false;
}

SyntheticScene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const int h = cfg.height, w = cfg.width;

  const Color bg0 = random_color(rng), bg1 = random_color(rng);
  const double bg_angle = uniform(rng, 0.0, 2 * std::numbers::pi);
  const Texture bg_tex = random_texture(rng, cfg.texture_amplitude);

  std::vector<Placed> placed;
  const int count = uniform_int(rng, cfg.min_instances, cfg.max_instances);
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const int family = uniform_int(rng, 0, kNumClasses - 1);
      const double size = uniform(rng, cfg.min_size, cfg.max_size);
      const double aspect = uniform(rng, 0.45, 1.0);
      const double angle = uniform(rng, 0.0, std::numbers::pi);
      const double param = uniform(rng, 0.0, 1.0);
      const double margin = size * 0.3;
      const double cx = uniform(rng, margin, w - margin), cy = uniform(rng, margin, h - margin);
      auto full = render_shape(static_cast<ShapeFamily>(family), cx, cy, size, aspect, angle, param, h, w);
      if (static_cast<int>(full.count()) < cfg.min_visible_pixels) continue;
      bool ok = true;
      for (const auto& p : placed) {
        BinaryMask vis = p.full;
        for (const auto& later : placed) {
          if (&later > &p) vis = geometry::mask_and_not(vis, later.full);
        }
        vis = geometry::mask_and_not(vis, full);
        // Only occluding strips may split an instance.
        if (has_holes(vis) || geometry::connected_components(vis).count > 1) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      placed.push_back({family, std::move(full), random_color(rng), random_texture(rng, cfg.texture_amplitude)});
      break;
    }
  }

  std::vector<Strip> strips;
  if (uniform(rng, 0.0, 1.0) < cfg.occluder_probability) {
    const int n = cfg.max_occluders > 0 ? uniform_int(rng, 1, cfg.max_occluders) : 0;
    for (int k = 0; k < n; ++k) {
      const double theta = uniform(rng, 0.0, std::numbers::pi);
      const double width = uniform(rng, cfg.occluder_min_width, cfg.occluder_max_width);
      strips.push_back({uniform(rng, 0.25 * w, 0.75 * w), uniform(rng, 0.25 * h, 0.75 * h), -std::sin(theta),
                        std::cos(theta), width / 2});
    }
  }
  const Color strip_color = random_color(rng);

  SyntheticScene scene;
  scene.seed = seed;
  scene.image = Image(h, w, 3);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double gx = std::cos(bg_angle), gy = std::sin(bg_angle);
  const double diag = std::hypot(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      Color col{};
      const double t = std::clamp(0.5 + ((x - w / 2.0) * gx + (y - h / 2.0) * gy) / diag, 0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch) col.c[ch] = (1 - t) * bg0.c[ch] + t * bg1.c[ch] + bg_tex(x, y);
      for (const auto& p : placed) {
        if (!p.full.at(r, c)) continue;
        const double tex = p.texture(x, y);
        for (int ch = 0; ch < 3; ++ch) col.c[ch] = p.color.c[ch] + tex;
      }
      for (const auto& s : strips) {
        if (s.contains(x, y)) {
          for (int ch = 0; ch < 3; ++ch) col.c[ch] = strip_color.c[ch];
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double v = col.c[ch] + cfg.noise_sigma * noise(rng);
        scene.image.at(r, c, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  scene.image.quantize_8bit();

  BinaryMask strip_mask(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (const auto& s : strips) {
        if (s.contains(c + 0.5, r + 0.5)) strip_mask.set(r, c, true);
      }
    }
  }
  for (std::size_t i = 0; i < placed.size(); ++i) {
    BinaryMask vis = geometry::mask_and_not(placed[i].full, strip_mask);
    for (std::size_t j = i + 1; j < placed.size(); ++j) vis = geometry::mask_and_not(vis, placed[j].full);
    remove_small_components(vis, cfg.min_component_pixels);
    if (static_cast<int>(vis.count()) < cfg.min_visible_pixels) continue;
    SceneInstance inst;
    inst.label = placed[i].family;
    inst.polygons = geometry::extract_polygons(vis, 1.0);
    inst.mask = std::move(vis);
    if (inst.polygons.empty()) continue;
    scene.instances.push_back(std::move(inst));
  }
  return scene;
}

}  // namespace polydeform::data
