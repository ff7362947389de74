#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydeform/autodiff/checkpoint.hpp"
#include "polydeform/data/dataset.hpp"
#include "polydeform/data/sample.hpp"
#include "polydeform/model/model.hpp"

namespace polydeform::train {

struct ClassMetrics {
  int count = 0;
  double mean_iou = 0.0;
  double boundary_f1 = 0.0;
  double boundary_f2 = 0.0;
  double ap = 0.0;
};

struct MetricSet {
  double mean_iou = 0.0;
  double boundary_f1 = 0.0;  // mean over instances, 1px
  double boundary_f2 = 0.0;  // mean over instances, 2px
  double ap = 0.0;
  double ap50 = 0.0;
  double af = 0.0;
  bool af_undefined = false;
  std::map<std::string, ClassMetrics> per_class;
};

struct EvalReport {
  std::string split;
  std::string mode;
  int instances = 0;
  int images = 0;
  /// Identity-deformed initial polygons, rasterized in the image frame.
  MetricSet init;
  MetricSet refined;
  /// refined - init, field by field.
  MetricSet delta;
  /// IoU of the corrupted masks themselves (before polygon extraction).
  double raw_init_mask_iou = 0.0;
  std::string model_config_hash;
};

nlohmann::json to_json(const MetricSet& m);
nlohmann::json to_json(const EvalReport& r);
/// Plain-text table: one row per class plus the mean, init / refined / gain.
std::string format_report(const EvalReport& r);

struct EvalOptions {
  std::string split = "test";
  data::Mode mode = data::Mode::Detection;
  data::AugmentConfig augment;
  /// 0 evaluates every item.
  int max_instances = 0;
};

/// Runs deform_instance over the split's items and scores init and refined
/// masks against the ground truth of the same instances.
///
/// Detections carry score 1, so AP ranks them in item order. An item whose
/// crop yields no initial polygon contributes an empty mask to both sides.
EvalReport evaluate(const model::Model<float>& model, const data::Dataset& dataset, const EvalOptions& options);

/// Loads the model from a checkpoint. Throws CompatibilityError when
/// `expected_config_hash` is non-empty and differs from the checkpoint's.
EvalReport evaluate(const autodiff::Checkpoint& checkpoint, const data::Dataset& dataset, const EvalOptions& options,
                    const std::string& expected_config_hash = "");

}  // namespace polydeform::train
