#include "polydeform/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "polydeform/autodiff/ops.hpp"
#include "polydeform/error.hpp"
#include "polydeform/geometry/raster.hpp"
#include "polydeform/train/evaluate.hpp"

namespace polydeform::train {
namespace {

using Clock = std::chrono::steady_clock;

template <typename V>
void read_field(const nlohmann::json& j, const char* key, V& out) {
  try {
    out = j.get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train.") + key + ": " + e.what());
  }
}

struct Window {
  double loss = 0, chamfer = 0, std = 0, grad_norm = 0;
  int samples = 0, steps = 0;
};

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  augment.validate();
  if (augment.crop_size != model.features.crop_size) {
    throw ValidationError("train: augment.crop_size must equal model.features.crop_size");
  }
  if (!(lr > 0)) throw ValidationError("train.lr must be > 0");
  if (!(weight_decay >= 0)) throw ValidationError("train.weight_decay must be >= 0");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (epochs < 0) throw ValidationError("train.epochs must be >= 0");
  if (max_steps < 0) throw ValidationError("train.max_steps must be >= 0");
  if (!(grad_clip >= 0)) throw ValidationError("train.grad_clip must be >= 0");
  if (!(gt_box_probability >= 0 && gt_box_probability <= 1)) {
    throw ValidationError("train.gt_box_probability must be in [0,1]");
  }
  if (eval_every < 0 || eval_instances < 0 || log_every < 1) throw ValidationError("train: bad logging cadence");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", model::to_json(c.model)},
          {"loss", model::to_json(c.loss)},
          {"augment", data::to_json(c.augment)},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"grad_clip", c.grad_clip},
          {"mode", data::to_string(c.mode)},
          {"gt_box_probability", c.gt_box_probability},
          {"eval_every", c.eval_every},
          {"eval_instances", c.eval_instances},
          {"log_every", c.log_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "model") c.model = model::model_config_from_json(v);
    else if (key == "loss") c.loss = model::loss_config_from_json(v);
    else if (key == "augment") c.augment = data::augment_config_from_json(v);
    else if (key == "lr") read_field(v, "lr", c.lr);
    else if (key == "weight_decay") read_field(v, "weight_decay", c.weight_decay);
    else if (key == "batch_size") read_field(v, "batch_size", c.batch_size);
    else if (key == "epochs") read_field(v, "epochs", c.epochs);
    else if (key == "max_steps") read_field(v, "max_steps", c.max_steps);
    else if (key == "seed") read_field(v, "seed", c.seed);
    else if (key == "grad_clip") read_field(v, "grad_clip", c.grad_clip);
    else if (key == "mode") {
      std::string m;
      read_field(v, "mode", m);
      c.mode = data::parse_mode(m);
    } else if (key == "gt_box_probability") read_field(v, "gt_box_probability", c.gt_box_probability);
    else if (key == "eval_every") read_field(v, "eval_every", c.eval_every);
    else if (key == "eval_instances") read_field(v, "eval_instances", c.eval_instances);
    else if (key == "log_every") read_field(v, "log_every", c.log_every);
    else throw ValidationError("train: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string train_config_hash(const TrainConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(model::fnv1a64(to_json(cfg).dump())));
  return buf;
}

autodiff::Checkpoint make_train_checkpoint(const model::Model<float>& model, const Adam<float>& adam,
                                           const TrainConfig& cfg, std::int64_t step, const std::mt19937_64& rng) {
  auto ckpt = model::model_checkpoint(model);
  std::ostringstream rs;
  rs << rng;
  ckpt.manifest["train_config"] = to_json(cfg);
  ckpt.manifest["train_config_hash"] = train_config_hash(cfg);
  ckpt.manifest["step"] = step;
  ckpt.manifest["rng_state"] = rs.str();
  const auto& a = adam.config();
  ckpt.manifest["optimizer"] = {{"name", "adam"},
                                {"decoupled_weight_decay", true},
                                {"lr", a.lr},
                                {"weight_decay", a.weight_decay},
                                {"beta1", a.beta1},
                                {"beta2", a.beta2},
                                {"eps", a.eps},
                                {"t", adam.steps()}};
  adam.append_state(ckpt, model.params());
  return ckpt;
}

std::vector<geometry::Polygon> assign_targets(const geometry::Polygon& init, const std::vector<geometry::Polygon>& gt,
                                              int crop_size) {
  const auto a = geometry::rasterize_mask({init}, crop_size, crop_size);
  std::vector<geometry::Polygon> out;
  for (const auto& q : gt) {
    const auto b = geometry::rasterize_mask({q}, crop_size, crop_size);
    bool hit = false;
    for (std::size_t i = 0; i < a.data().size() && !hit; ++i) hit = a.data()[i] && b.data()[i];
    if (hit) out.push_back(q);
  }
  return out.empty() ? gt : out;
}

TrainResult train(const TrainConfig& cfg, const data::Dataset& dataset, const TrainOptions& options) {
  cfg.validate();
  const auto& split = dataset.split("train");
  if (split.items.empty()) throw ContractError("train: the train split is empty");

  model::Model<float> model(cfg.model);
  model.initialize(data::mix_seed(cfg.seed, 1));
  Adam<float> adam(model.params(), AdamConfig{cfg.lr, cfg.weight_decay});
  std::mt19937_64 rng(data::mix_seed(cfg.seed, 2));

  TrainResult result;
  const auto start = Clock::now();
  const int S = cfg.model.features.crop_size;
  Window win;
  int pending = 0;

  // State after the most recent clean optimizer step, kept only when an
  // abort path is set.
  const bool keep_last_good = !options.abort_checkpoint_path.empty();
  autodiff::Checkpoint last_good;
  if (keep_last_good) last_good = make_train_checkpoint(model, adam, cfg, 0, rng);

  auto abort = [&](const std::string& what) {
    if (keep_last_good) autodiff::save_checkpoint(options.abort_checkpoint_path, last_good);
    throw NumericalError("training aborted at step " + std::to_string(result.steps) + ": " + what);
  };

  auto optimizer_step = [&]() {
    if (pending > 1) {
      const float s = 1.0f / static_cast<float>(pending);
      for (const auto& entry : model.params().entries()) {
        autodiff::Tensor<float> p = entry.second;
        if (!p.has_grad()) continue;
        for (float& g : p.grad()) g *= s;
      }
    }
    const double norm = clip_grad_norm(model.params(), cfg.grad_clip);
    if (!std::isfinite(norm)) abort("non-finite gradient norm");
    try {
      adam.step(model.params());
    } catch (const NumericalError& e) {
      abort(e.what());
    }
    model.params().zero_grad();
    ++result.steps;
    if (keep_last_good) last_good = make_train_checkpoint(model, adam, cfg, result.steps, rng);
    win.grad_norm += norm;
    win.steps += 1;
    pending = 0;

    if (result.steps % cfg.log_every == 0 && win.samples > 0) {
      const double n = win.samples;
      nlohmann::json entry = {{"step", result.steps},
                              {"loss", win.loss / n},
                              {"chamfer", win.chamfer / n},
                              {"std", win.std / n},
                              {"grad_norm", win.grad_norm / std::max(1, win.steps)},
                              {"elapsed_s", std::chrono::duration<double>(Clock::now() - start).count()}};
      result.timeline.push_back(entry);
      if (options.on_log) options.on_log(entry);
      win = {};
    }
    if (cfg.eval_every > 0 && result.steps % cfg.eval_every == 0 && !dataset.split("val").items.empty()) {
      EvalOptions eo;
      eo.split = "val";
      eo.mode = cfg.mode;
      eo.augment = cfg.augment;
      eo.max_instances = cfg.eval_instances;
      const auto rep = evaluate(model, dataset, eo);
      nlohmann::json entry = {{"step", result.steps},
                              {"val_iou_gain", rep.delta.mean_iou},
                              {"val_f1_gain", rep.delta.boundary_f1},
                              {"val_refined_iou", rep.refined.mean_iou}};
      result.timeline.push_back(entry);
      if (options.on_log) options.on_log(entry);
    }
  };

  auto out_of_budget = [&]() {
    return options.time_budget_seconds > 0 &&
           std::chrono::duration<double>(Clock::now() - start).count() > options.time_budget_seconds;
  };

  std::vector<std::size_t> order(split.items.size());
  bool done = false;
  for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) {
        done = true;
        break;
      }
      if (out_of_budget()) {
        result.budget_exhausted = true;
        done = true;
        break;
      }
      const auto& item = split.items[idx];
      const auto& scene = split.scenes.at(static_cast<std::size_t>(item.scene));
      const std::uint64_t sample_seed = rng();
      const bool gt_box = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.gt_box_probability;
      const auto sample =
          data::make_sample(scene, item.instance, item.init_mask, cfg.mode,
                            gt_box ? data::Provenance::GtBox : data::Provenance::ProposedBox, true, cfg.augment,
                            sample_seed);
      if (!sample.usable || sample.gt_polygons.empty()) {
        ++result.skipped;
        continue;
      }
      if (options.before_sample) options.before_sample(result.steps, model);

      model::Graph<float> g(autodiff::GraphOptions{true, false});
      const auto fmap = model.feature_map(g, model::image_to_tensor<float>(sample.crop, cfg.model.features));
      autodiff::Tensor<float> total;
      double chamfer = 0.0, std_term = 0.0;
      int terms = 0;
      for (const auto& poly : sample.init_polygons) {
        const auto targets = assign_targets(poly, sample.gt_polygons, S);
        const auto res = model.deform(g, fmap, model::polygon_to_tensor<float>(poly));
        // Clamping would turn NaN offsets into a collapsed polygon.
        for (float v : res.offsets.data()) {
          if (!std::isfinite(v)) abort("non-finite deformer output");
        }
        model::LossBreakdown<float> lb;
        try {
          lb = model::total_loss(g, res.vertices, targets, cfg.loss);
        } catch (const DegenerateError&) {
          continue;
        }
        total = terms == 0 ? lb.total : autodiff::ops::add(g, total, lb.total);
        chamfer += lb.chamfer;
        std_term += lb.std;
        ++terms;
      }
      if (terms == 0) {
        ++result.skipped;
        continue;
      }
      if (terms > 1) total = autodiff::ops::scale(g, total, 1.0f / static_cast<float>(terms));
      const double value = static_cast<double>(total.item());
      if (!std::isfinite(value)) abort("non-finite loss");
      g.backward(total);

      result.sample_losses.push_back(value);
      ++result.samples;
      win.loss += value;
      win.chamfer += chamfer / terms;
      win.std += std_term / terms;
      win.samples += 1;
      if (++pending == cfg.batch_size) optimizer_step();
    }
  }
  if (pending > 0) optimizer_step();

  result.checkpoint = make_train_checkpoint(model, adam, cfg, result.steps, rng);
  return result;
}

}  // namespace polydeform::train
