#include "polydeform/train/evaluate.hpp"

#include <cstdio>
#include <optional>
#include <sstream>

#include "polydeform/error.hpp"
#include "polydeform/geometry/box_ops.hpp"
#include "polydeform/geometry/raster.hpp"
#include "polydeform/metrics/metrics.hpp"
#include "polydeform/train/inference.hpp"

namespace polydeform::train {
namespace {

constexpr const char* kAfReading =
    "boundary F (1px) averaged over true-positive matches at each IoU threshold 0.50:0.95, then over classes";

struct Scored {
  std::vector<BinaryMask> pred;
  std::vector<BinaryMask> gt;
  std::vector<int> labels;
  std::vector<int> images;
};

MetricSet score(const Scored& s) {
  MetricSet m;
  const std::size_t n = s.pred.size();
  std::vector<metrics::Detection> dets;
  std::vector<metrics::GroundTruth> gts;
  std::map<int, int> counts;
  std::map<int, ClassMetrics> acc;
  for (std::size_t i = 0; i < n; ++i) {
    const double iou = metrics::mask_iou(s.pred[i], s.gt[i]);
    const double f1 = metrics::boundary_f(s.pred[i], s.gt[i], 1.0);
    const double f2 = metrics::boundary_f(s.pred[i], s.gt[i], 2.0);
    m.mean_iou += iou;
    m.boundary_f1 += f1;
    m.boundary_f2 += f2;
    auto& c = acc[s.labels[i]];
    c.count += 1;
    c.mean_iou += iou;
    c.boundary_f1 += f1;
    c.boundary_f2 += f2;
    dets.push_back({s.images[i], s.labels[i], 1.0, s.pred[i]});
    gts.push_back({s.images[i], s.labels[i], s.gt[i]});
  }
  if (n == 0) return m;
  m.mean_iou /= static_cast<double>(n);
  m.boundary_f1 /= static_cast<double>(n);
  m.boundary_f2 /= static_cast<double>(n);
  const auto ap = metrics::average_precision(dets, gts);
  const auto af = metrics::average_f(dets, gts);
  m.ap = ap.ap;
  m.ap50 = ap.ap50;
  m.af = af.af;
  m.af_undefined = af.undefined;
  for (auto& [label, c] : acc) {
    const double k = static_cast<double>(c.count);
    c.mean_iou /= k;
    c.boundary_f1 /= k;
    c.boundary_f2 /= k;
    if (auto it = ap.per_class.find(label); it != ap.per_class.end()) c.ap = it->second;
    m.per_class[data::class_names().at(static_cast<std::size_t>(label))] = c;
  }
  return m;
}

MetricSet subtract(const MetricSet& a, const MetricSet& b) {
  MetricSet d;
  d.mean_iou = a.mean_iou - b.mean_iou;
  d.boundary_f1 = a.boundary_f1 - b.boundary_f1;
  d.boundary_f2 = a.boundary_f2 - b.boundary_f2;
  d.ap = a.ap - b.ap;
  d.ap50 = a.ap50 - b.ap50;
  d.af = a.af - b.af;
  d.af_undefined = a.af_undefined || b.af_undefined;
  for (const auto& [name, ca] : a.per_class) {
    const auto it = b.per_class.find(name);
    if (it == b.per_class.end()) continue;
    const auto& cb = it->second;
    d.per_class[name] = {ca.count, ca.mean_iou - cb.mean_iou, ca.boundary_f1 - cb.boundary_f1,
                         ca.boundary_f2 - cb.boundary_f2, ca.ap - cb.ap};
  }
  return d;
}

BinaryMask rasterize_or_empty(const std::vector<Polygon>& polys, int h, int w) {
  if (polys.empty()) return BinaryMask(h, w);
  return geometry::rasterize_mask(polys, h, w);
}

}  // namespace

nlohmann::json to_json(const MetricSet& m) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [name, c] : m.per_class) {
    per_class[name] = {{"count", c.count},
                       {"mean_iou", c.mean_iou},
                       {"boundary_f1", c.boundary_f1},
                       {"boundary_f2", c.boundary_f2},
                       {"ap", c.ap}};
  }
  return {{"mean_iou", m.mean_iou}, {"boundary_f1", m.boundary_f1}, {"boundary_f2", m.boundary_f2},
          {"ap", m.ap},             {"ap50", m.ap50},               {"af", m.af},
          {"af_undefined", m.af_undefined}, {"per_class", per_class}};
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"split", r.split},
          {"mode", r.mode},
          {"instances", r.instances},
          {"images", r.images},
          {"init", to_json(r.init)},
          {"refined", to_json(r.refined)},
          {"delta", to_json(r.delta)},
          {"raw_init_mask_iou", r.raw_init_mask_iou},
          {"af_reading", kAfReading},
          {"model_config_hash", r.model_config_hash}};
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "split=%s mode=%s instances=%d images=%d\n", r.split.c_str(), r.mode.c_str(),
                r.instances, r.images);
  os << line;
  std::snprintf(line, sizeof(line), "%-14s %5s | %-20s | %-20s | %-20s\n", "class", "n", "IoU init/ref/gain",
                "F@1px init/ref/gain", "F@2px init/ref/gain");
  os << line;
  auto row = [&](const std::string& name, int n, double i0, double i1, double f0, double f1, double g0, double g1) {
    std::snprintf(line, sizeof(line), "%-14s %5d | %5.1f %5.1f %+6.1f   | %5.1f %5.1f %+6.1f   | %5.1f %5.1f %+6.1f\n",
                  name.c_str(), n, 100 * i0, 100 * i1, 100 * (i1 - i0), 100 * f0, 100 * f1, 100 * (f1 - f0),
                  100 * g0, 100 * g1, 100 * (g1 - g0));
    os << line;
  };
  for (const auto& [name, c] : r.refined.per_class) {
    const auto& c0 = r.init.per_class.at(name);
    row(name, c.count, c0.mean_iou, c.mean_iou, c0.boundary_f1, c.boundary_f1, c0.boundary_f2, c.boundary_f2);
  }
  row("mean", r.instances, r.init.mean_iou, r.refined.mean_iou, r.init.boundary_f1, r.refined.boundary_f1,
      r.init.boundary_f2, r.refined.boundary_f2);
  std::snprintf(line, sizeof(line), "AP   %5.1f -> %5.1f (%+.1f)\nAP50 %5.1f -> %5.1f (%+.1f)\nAF   %5.1f -> %5.1f (%+.1f)\n",
                100 * r.init.ap, 100 * r.refined.ap, 100 * r.delta.ap, 100 * r.init.ap50, 100 * r.refined.ap50,
                100 * r.delta.ap50, 100 * r.init.af, 100 * r.refined.af, 100 * r.delta.af);
  os << line;
  std::snprintf(line, sizeof(line), "raw corrupted-mask IoU %5.1f\n", 100 * r.raw_init_mask_iou);
  os << line;
  return os.str();
}

EvalReport evaluate(const model::Model<float>& model, const data::Dataset& dataset, const EvalOptions& options) {
  options.augment.validate();
  if (options.augment.crop_size != model.config().features.crop_size) {
    throw CompatibilityError("evaluate: augment crop size differs from the model's crop size");
  }
  const auto& split = dataset.split(options.split);
  EvalReport report;
  report.split = options.split;
  report.mode = data::to_string(options.mode);
  report.model_config_hash = model::config_hash(model.config());

  Scored init, refined;
  std::map<int, bool> images;
  std::size_t n = split.items.size();
  if (options.max_instances > 0) n = std::min(n, static_cast<std::size_t>(options.max_instances));
  double raw = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& item = split.items[k];
    const auto& scene = split.scenes.at(static_cast<std::size_t>(item.scene));
    const auto& gt = scene.instances.at(static_cast<std::size_t>(item.instance));
    const int h = scene.image.height, w = scene.image.width;
    std::optional<Box> box;
    if (options.mode == data::Mode::Annotation) box = geometry::fit_box(gt.mask);

    std::vector<Polygon> init_polys, refined_polys;
    try {
      auto inst = instance_from_mask(scene.image, item.init_mask, options.mode, options.augment, box);
      inst.label = gt.label;
      if (!inst.polygons.empty()) {
        init_polys = inst.image_polygons();
        refined_polys = deform_instance(model, inst).image_polygons();
      }
    } catch (const DegenerateError&) {
      // Scored as an empty prediction on both sides.
    }
    init.pred.push_back(rasterize_or_empty(init_polys, h, w));
    refined.pred.push_back(rasterize_or_empty(refined_polys, h, w));
    for (Scored* s : {&init, &refined}) {
      s->gt.push_back(gt.mask);
      s->labels.push_back(gt.label);
      s->images.push_back(item.scene);
    }
    raw += metrics::mask_iou(item.init_mask, gt.mask);
    images[item.scene] = true;
  }
  report.instances = static_cast<int>(n);
  report.images = static_cast<int>(images.size());
  report.raw_init_mask_iou = n > 0 ? raw / static_cast<double>(n) : 0.0;
  report.init = score(init);
  report.refined = score(refined);
  report.delta = subtract(report.refined, report.init);
  return report;
}

EvalReport evaluate(const autodiff::Checkpoint& checkpoint, const data::Dataset& dataset, const EvalOptions& options,
                    const std::string& expected_config_hash) {
  const auto model = model::load_model<float>(checkpoint, expected_config_hash);
  return evaluate(*model, dataset, options);
}

}  // namespace polydeform::train
