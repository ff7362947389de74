#include "polydeform/data/sample.hpp"

#include <algorithm>
#include <random>

#include "polydeform/error.hpp"
#include "polydeform/geometry/box_ops.hpp"
#include "polydeform/geometry/contour.hpp"

namespace polydeform::data {
namespace {

Box square_box(const Box& b) {
  const double side = std::max(b.width(), b.height());
  const double cx = (b.x0 + b.x1) / 2, cy = (b.y0 + b.y1) / 2;
  return {cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2};
}

geometry::Polygon clamp_polygon(const geometry::Polygon& p, double lo, double hi) {
  std::vector<Vec2> v;
  v.reserve(p.size());
  for (const auto& q : p.vertices()) v.push_back({std::clamp(q.x, lo, hi), std::clamp(q.y, lo, hi)});
  return geometry::Polygon(std::move(v));
}

}  // namespace

std::string to_string(Mode m) { return m == Mode::Detection ? "detection" : "annotation"; }
std::string to_string(Provenance p) { return p == Provenance::ProposedBox ? "proposed-box" : "gt-box"; }

Mode parse_mode(const std::string& s) {
  if (s == "detection") return Mode::Detection;
  if (s == "annotation") return Mode::Annotation;
  throw ValidationError("unknown mode '" + s + "' (expected detection or annotation)");
}

void AugmentConfig::validate() const {
  if (crop_size < 8 || (crop_size & (crop_size - 1)) != 0) {
    throw ValidationError("augment.crop_size must be a power of two >= 8");
  }
  if (!(vertex_spacing >= 1)) throw ValidationError("augment.vertex_spacing must be >= 1");
  if (!(jitter_frac >= 0 && jitter_frac < 0.5)) throw ValidationError("augment.jitter_frac must be in [0, 0.5)");
  if (!(test_expand_frac >= -0.5)) throw ValidationError("augment.test_expand_frac must be >= -0.5");
  if (!(annotation_expand_px >= 0)) throw ValidationError("augment.annotation_expand_px must be >= 0");
  if (!(flip_probability >= 0 && flip_probability <= 1)) {
    throw ValidationError("augment.flip_probability must be in [0,1]");
  }
  if (!(min_box_iou >= 0 && min_box_iou <= 1)) throw ValidationError("augment.min_box_iou must be in [0,1]");
}

nlohmann::json to_json(const AugmentConfig& c) {
  return {{"crop_size", c.crop_size},
          {"vertex_spacing", c.vertex_spacing},
          {"jitter_frac", c.jitter_frac},
          {"test_expand_frac", c.test_expand_frac},
          {"annotation_expand_px", c.annotation_expand_px},
          {"flip_probability", c.flip_probability},
          {"square_crop", c.square_crop},
          {"min_box_iou", c.min_box_iou}};
}

AugmentConfig augment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("augment config must be a JSON object");
  auto merged = to_json(AugmentConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!merged.contains(key)) throw ValidationError("augment: unknown key '" + key + "'");
    if (merged[key].type() != value.type() && !(merged[key].is_number() && value.is_number())) {
      throw ValidationError("augment." + key + " has the wrong type");
    }
    merged[key] = value;
  }
  AugmentConfig c;
  c.crop_size = merged["crop_size"].get<int>();
  c.vertex_spacing = merged["vertex_spacing"].get<double>();
  c.jitter_frac = merged["jitter_frac"].get<double>();
  c.test_expand_frac = merged["test_expand_frac"].get<double>();
  c.annotation_expand_px = merged["annotation_expand_px"].get<double>();
  c.flip_probability = merged["flip_probability"].get<double>();
  c.square_crop = merged["square_crop"].get<bool>();
  c.min_box_iou = merged["min_box_iou"].get<double>();
  c.validate();
  return c;
}

Vec2 CropTransform::to_crop(Vec2 p) const {
  const double s = static_cast<double>(size);
  Vec2 u{(p.x - box.x0) * s / box.width(), (p.y - box.y0) * s / box.height()};
  if (flipped) u.x = s - u.x;
  return u;
}

Vec2 CropTransform::to_image(Vec2 u) const {
  const double s = static_cast<double>(size);
  if (flipped) u.x = s - u.x;
  return {box.x0 + u.x * box.width() / s, box.y0 + u.y * box.height() / s};
}

geometry::Polygon CropTransform::to_crop(const geometry::Polygon& poly) const {
  std::vector<Vec2> v;
  v.reserve(poly.size());
  for (const auto& p : poly.vertices()) v.push_back(to_crop(p));
  return geometry::Polygon(std::move(v));
}

geometry::Polygon CropTransform::to_image(const geometry::Polygon& poly) const {
  std::vector<Vec2> v;
  v.reserve(poly.size());
  for (const auto& p : poly.vertices()) v.push_back(to_image(p));
  return geometry::Polygon(std::move(v));
}

Box inference_box(const Box& tight, Mode mode, const AugmentConfig& cfg, int image_height, int image_width) {
  const Box bounds{0, 0, static_cast<double>(image_width), static_cast<double>(image_height)};
  Box b = mode == Mode::Annotation ? geometry::expand_box(tight, 0.0, cfg.annotation_expand_px, bounds)
                                   : geometry::expand_box(tight, cfg.test_expand_frac, 0.0, bounds);
  if (cfg.square_crop) b = square_box(b);
  return b;
}

TrainingSample flip_sample(const TrainingSample& s) {
  TrainingSample out = s;
  out.crop = flip_horizontal(s.crop);
  const double size = static_cast<double>(s.transform.size);
  auto mirror = [size](const std::vector<geometry::Polygon>& polys) {
    std::vector<geometry::Polygon> res;
    for (const auto& p : polys) {
      std::vector<Vec2> v;
      for (const auto& q : p.vertices()) v.push_back({size - q.x, q.y});
      res.emplace_back(std::move(v));
    }
    return res;
  };
  out.init_polygons = mirror(s.init_polygons);
  out.gt_polygons = mirror(s.gt_polygons);
  out.transform.flipped = !s.transform.flipped;
  return out;
}

TrainingSample make_sample(const SyntheticScene& scene, int instance_index, const BinaryMask& init_mask, Mode mode,
                           Provenance provenance, bool training, const AugmentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (instance_index < 0 || instance_index >= static_cast<int>(scene.instances.size())) {
    throw ContractError("make_sample: instance index out of range");
  }
  const auto& inst = scene.instances[static_cast<std::size_t>(instance_index)];
  const int h = scene.image.height, w = scene.image.width;
  if (init_mask.height() != h || init_mask.width() != w) throw ShapeError("make_sample: init mask size mismatch");

  std::mt19937_64 rng(seed);
  TrainingSample s;
  s.mode = mode;
  s.label = inst.label;
  s.instance_index = instance_index;
  // Annotation always starts from the ground-truth box.
  s.provenance = mode == Mode::Annotation ? Provenance::GtBox : provenance;

  const Box gt_box = geometry::fit_box(inst.mask);
  Box box = gt_box;
  if (s.provenance == Provenance::ProposedBox) {
    if (init_mask.empty()) {
      s.usable = false;
      return s;
    }
    box = geometry::fit_box(init_mask);
  }
  s.box_iou = geometry::box_iou(box, gt_box);

  const Box bounds{0, 0, static_cast<double>(w), static_cast<double>(h)};
  if (training && mode == Mode::Detection) {
    std::uniform_real_distribution<double> jitter(-cfg.jitter_frac, cfg.jitter_frac);
    const double bw = box.width(), bh = box.height();
    Box j{box.x0 - jitter(rng) * bw, box.y0 - jitter(rng) * bh, box.x1 + jitter(rng) * bw, box.y1 + jitter(rng) * bh};
    box = geometry::clip_box(j, bounds);
    if (cfg.square_crop) box = square_box(box);
  } else {
    box = inference_box(box, mode, cfg, h, w);
  }

  s.transform = CropTransform{box, cfg.crop_size, false};
  s.crop = crop_resize(scene.image, box, cfg.crop_size, cfg.crop_size);
  const auto crop_mask = crop_resize_mask(init_mask, box, cfg.crop_size, cfg.crop_size);
  s.init_polygons = geometry::extract_polygons(crop_mask, cfg.vertex_spacing);
  const double size = static_cast<double>(cfg.crop_size);
  for (const auto& p : inst.polygons) s.gt_polygons.push_back(clamp_polygon(s.transform.to_crop(p), 0.0, size));

  s.usable = !s.init_polygons.empty() && s.box_iou > cfg.min_box_iou;
  if (training && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.flip_probability) {
    s = flip_sample(s);
  }
  return s;
}

}  // namespace polydeform::data
