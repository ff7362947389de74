#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydeform/autodiff/checkpoint.hpp"
#include "polydeform/data/dataset.hpp"
#include "polydeform/data/sample.hpp"
#include "polydeform/model/config.hpp"
#include "polydeform/model/losses.hpp"
#include "polydeform/model/model.hpp"
#include "polydeform/train/adam.hpp"

namespace polydeform::train {

struct TrainConfig {
  model::ModelConfig model;
  model::LossConfig loss;
  data::AugmentConfig augment;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  /// Samples whose gradients are averaged per optimizer step.
  int batch_size = 1;
  int epochs = 1;
  /// Optimizer-step cap across epochs (0 = none).
  std::int64_t max_steps = 0;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip (0 disables).
  double grad_clip = 10.0;
  data::Mode mode = data::Mode::Detection;
  /// Chance a detection-mode sample is cropped from the GT box rather than
  /// the corrupted mask's box.
  double gt_box_probability = 0.5;
  /// Validation cadence in steps (0 disables) and its instance cap.
  int eval_every = 0;
  int eval_instances = 50;
  int log_every = 100;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys raise ValidationError.
TrainConfig train_config_from_json(const nlohmann::json& j);
std::string train_config_hash(const TrainConfig& cfg);

struct TrainOptions {
  /// Where the last good checkpoint goes when training aborts on NaN/Inf.
  std::filesystem::path abort_checkpoint_path;
  /// Wall-clock limit in seconds (0 = none). Runs cut short by it are not
  /// reproducible.
  double time_budget_seconds = 0.0;
  std::function<void(const nlohmann::json&)> on_log;
  /// Called before every forward pass; tests use it to inject faults.
  std::function<void(std::int64_t step, model::Model<float>&)> before_sample;
};

struct TrainResult {
  autodiff::Checkpoint checkpoint;
  nlohmann::json timeline = nlohmann::json::array();
  /// Per-sample loss in visiting order.
  std::vector<double> sample_losses;
  std::int64_t steps = 0;
  std::int64_t samples = 0;
  std::int64_t skipped = 0;
  bool budget_exhausted = false;
};

/// Trains on the "train" split. Deterministic in (config, dataset) unless
/// the time budget cuts the run. On a non-finite loss or gradient, writes the
/// last good checkpoint (if a path is set) and throws NumericalError.
TrainResult train(const TrainConfig& cfg, const data::Dataset& dataset, const TrainOptions& options = {});

/// Model weights, optimizer moments and a manifest with "architecture",
/// "config_hash", "train_config", "train_config_hash", "step", "rng_state"
/// and "optimizer".
autodiff::Checkpoint make_train_checkpoint(const model::Model<float>& model, const Adam<float>& adam,
                                           const TrainConfig& cfg, std::int64_t step, const std::mt19937_64& rng);

/// Ground-truth polygons overlapping `init` in the crop frame, or all of
/// them when none overlaps.
std::vector<geometry::Polygon> assign_targets(const geometry::Polygon& init, const std::vector<geometry::Polygon>& gt,
                                              int crop_size);

}  // namespace polydeform::train
