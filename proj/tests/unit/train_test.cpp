#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include "polydeform/autodiff/checkpoint.hpp"
#include "polydeform/data/dataset.hpp"
#include "polydeform/error.hpp"
#include "polydeform/geometry/raster.hpp"
#include "polydeform/metrics/metrics.hpp"
#include "polydeform/train/adam.hpp"
#include "polydeform/train/evaluate.hpp"
#include "polydeform/train/inference.hpp"
#include "polydeform/train/trainer.hpp"
#include "support/grad_cases.hpp"

using namespace polydeform;
using namespace polydeform::train;
namespace fs = std::filesystem;

namespace {

const data::Dataset& tiny_dataset() {
  static const data::Dataset ds = [] {
    data::DatasetConfig cfg;
    cfg.scene.height = cfg.scene.width = 96;
    cfg.scene.min_size = 24;
    cfg.scene.max_size = 40;
    cfg.scene.min_visible_pixels = 80;
    cfg.train_instances = 10;
    cfg.val_instances = 4;
    cfg.test_instances = 5;
    cfg.seed = 4;
    return data::build_dataset(cfg);
  }();
  return ds;
}

std::string io_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.model = fixtures::small_model_config(32);
  cfg.augment.crop_size = 32;
  cfg.augment.vertex_spacing = 4;
  cfg.epochs = 2;
  cfg.seed = 3;
  cfg.lr = 1e-3;
  cfg.log_every = 5;
  return cfg;
}

autodiff::ParameterSet<double> scalar_param(double value, autodiff::Tensor<double>& handle) {
  autodiff::ParameterSet<double> ps;
  handle = ps.add("x", autodiff::Tensor<double>::from_data({1}, {value}));
  return ps;
}

}  // namespace

TEST(Adam, ThreeHandSteppedUpdates) {
  autodiff::Tensor<double> x;
  auto ps = scalar_param(1.0, x);
  Adam<double> adam(ps, AdamConfig{0.1, 0.01});
  // Reference values worked out with 40-digit decimal arithmetic.
  const double grads[] = {0.5, -0.3, 0.2};
  const double expect[] = {0.89900000199999996, 0.87895119893977506, 0.84332947958994215};
  for (int t = 0; t < 3; ++t) {
    x.grad()[0] = grads[t];
    adam.step(ps);
    EXPECT_NEAR(x.data()[0], expect[t], 1e-12) << "step " << t + 1;
  }
  EXPECT_EQ(adam.steps(), 3);
}

TEST(Adam, ConstantGradientApproachesLearningRate) {
  autodiff::Tensor<double> x;
  auto ps = scalar_param(0.0, x);
  Adam<double> adam(ps, AdamConfig{1e-3, 0.0});
  double prev = 0;
  for (int t = 0; t < 3000; ++t) {
    x.grad()[0] = -2.5;
    adam.step(ps);
    if (t == 2999) EXPECT_NEAR(x.data()[0] - prev, 1e-3, 1e-9);
    prev = x.data()[0];
  }
}

TEST(Adam, ZeroGradientWithoutDecayLeavesParamsUnchanged) {
  autodiff::Tensor<double> x;
  auto ps = scalar_param(0.75, x);
  Adam<double> adam(ps, AdamConfig{0.1, 0.0});
  for (int t = 0; t < 5; ++t) {
    x.zero_grad();
    adam.step(ps);
  }
  EXPECT_EQ(x.data()[0], 0.75);
  x.drop_grad();
  adam.step(ps);
  EXPECT_EQ(x.data()[0], 0.75);
}

TEST(Adam, NonFiniteGradientNamesTheParameter) {
  autodiff::ParameterSet<double> ps;
  auto a = ps.add("layer.a", autodiff::Tensor<double>::full({2}, 1.0));
  auto b = ps.add("layer.b", autodiff::Tensor<double>::full({2}, 1.0));
  a.grad()[0] = 1.0;
  b.grad()[1] = std::numeric_limits<double>::quiet_NaN();
  Adam<double> adam(ps, AdamConfig{});
  try {
    adam.step(ps);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.b"), std::string::npos);
  }
  EXPECT_EQ(a.data()[0], 1.0);  // nothing modified
  EXPECT_EQ(adam.steps(), 0);
}

TEST(Adam, ClipGradNorm) {
  autodiff::ParameterSet<double> ps;
  auto a = ps.add("a", autodiff::Tensor<double>::zeros({2}));
  a.grad()[0] = 3;
  a.grad()[1] = 4;
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad()[1], 4.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-12);
  EXPECT_NEAR(clip_grad_norm(ps, 0.0), 1.0, 1e-12);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  const auto cfg = tiny_config();
  const auto back = train_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(train_config_hash(back), train_config_hash(cfg));
  EXPECT_THROW(train_config_from_json({{"learning_rate", 1}}), ValidationError);
  auto bad = cfg;
  bad.lr = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = cfg;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = cfg;
  bad.augment.crop_size = 64;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Train, ZeroEpochsIsTheInitialization) {
  auto cfg = tiny_config();
  cfg.epochs = 0;
  const auto r = train::train(cfg, tiny_dataset());
  EXPECT_EQ(r.steps, 0);
  const auto model = model::load_model<float>(r.checkpoint);
  model::Model<float> fresh(cfg.model);
  fresh.initialize(data::mix_seed(cfg.seed, 1));
  EXPECT_EQ(autodiff::serialize_checkpoint(model::model_checkpoint(*model)),
            autodiff::serialize_checkpoint(model::model_checkpoint(fresh)));
}

TEST(Train, SameSeedGivesIdenticalCheckpoints) {
  const auto cfg = tiny_config();
  const auto a = train::train(cfg, tiny_dataset());
  const auto b = train::train(cfg, tiny_dataset());
  EXPECT_GT(a.steps, 0);
  EXPECT_EQ(autodiff::serialize_checkpoint(a.checkpoint), autodiff::serialize_checkpoint(b.checkpoint));
  EXPECT_EQ(a.sample_losses, b.sample_losses);
  auto other = cfg;
  other.seed = 4;
  EXPECT_NE(autodiff::serialize_checkpoint(train::train(other, tiny_dataset()).checkpoint),
            autodiff::serialize_checkpoint(a.checkpoint));
}

TEST(Train, CheckpointManifestAndRoundTrip) {
  auto cfg = tiny_config();
  cfg.max_steps = 4;
  cfg.batch_size = 2;
  const auto r = train::train(cfg, tiny_dataset());
  EXPECT_EQ(r.steps, 4);
  const auto& m = r.checkpoint.manifest;
  EXPECT_EQ(m.at("step"), 4);
  EXPECT_EQ(m.at("train_config_hash"), train_config_hash(cfg));
  EXPECT_EQ(m.at("config_hash"), model::config_hash(cfg.model));
  EXPECT_EQ(m.at("optimizer").at("decoupled_weight_decay"), true);
  EXPECT_TRUE(m.contains("rng_state"));
  EXPECT_NE(r.checkpoint.find("adam.m/deformer.head.out.weight"), nullptr);

  const auto path = fs::temp_directory_path() / "polydeform_train_test.ckpt";
  autodiff::save_checkpoint(path, r.checkpoint);
  const auto bytes = io_bytes(path);
  const auto loaded = autodiff::load_checkpoint(path);
  autodiff::save_checkpoint(path, loaded);
  EXPECT_EQ(io_bytes(path), bytes);
  fs::remove(path);
}

TEST(Train, LogsTimelineAndSkipsNothingUnexpected) {
  auto cfg = tiny_config();
  cfg.eval_every = 5;
  cfg.eval_instances = 2;
  int logged = 0;
  TrainOptions opts;
  opts.on_log = [&](const nlohmann::json&) { ++logged; };
  const auto r = train::train(cfg, tiny_dataset(), opts);
  EXPECT_EQ(static_cast<std::size_t>(logged), r.timeline.size());
  EXPECT_EQ(r.samples + r.skipped, 2 * static_cast<std::int64_t>(tiny_dataset().split("train").items.size()));
  bool saw_eval = false;
  for (const auto& e : r.timeline) saw_eval |= e.contains("val_iou_gain");
  EXPECT_TRUE(saw_eval);
}

TEST(Train, NonFiniteLossAbortsWithLastGoodCheckpoint) {
  auto cfg = tiny_config();
  const auto path = fs::temp_directory_path() / "polydeform_abort.ckpt";
  fs::remove(path);
  TrainOptions opts;
  opts.abort_checkpoint_path = path;
  opts.before_sample = [](std::int64_t step, model::Model<float>& m) {
    if (step == 3) m.params().get("deformer.head.out.bias").data()[0] = std::numeric_limits<float>::quiet_NaN();
  };
  EXPECT_THROW(train::train(cfg, tiny_dataset(), opts), NumericalError);
  ASSERT_TRUE(fs::exists(path));
  const auto ck = autodiff::load_checkpoint(path);
  EXPECT_EQ(ck.manifest.at("step"), 3);
  for (const auto& t : ck.tensors) {
    for (double v : t.values) ASSERT_TRUE(std::isfinite(v)) << t.name;
  }
  fs::remove(path);
}

TEST(Train, DivergingRunAbortsInsteadOfSkipping) {
  auto cfg = tiny_config();
  cfg.lr = 1e30;
  cfg.grad_clip = 0;
  EXPECT_THROW(train::train(cfg, tiny_dataset()), NumericalError);
}

TEST(Targets, OverlapAssignment) {
  const geometry::Polygon a({{2, 2}, {10, 2}, {10, 10}, {2, 10}});
  const geometry::Polygon b({{20, 20}, {28, 20}, {28, 28}, {20, 28}});
  const geometry::Polygon init({{4, 4}, {12, 4}, {12, 12}, {4, 12}});
  EXPECT_EQ(assign_targets(init, {a, b}, 32), std::vector<geometry::Polygon>{a});
  const geometry::Polygon far({{14, 14}, {16, 14}, {16, 16}});
  EXPECT_EQ(assign_targets(far, {a, b}, 32).size(), 2u);
}

TEST(Evaluate, IdentityModelLeavesMetricsUnchanged) {
  const auto cfg = tiny_config();
  model::Model<float> m(cfg.model);
  m.initialize(1);
  EvalOptions eo;
  eo.augment = cfg.augment;
  for (auto mode : {data::Mode::Detection, data::Mode::Annotation}) {
    eo.mode = mode;
    const auto r = evaluate(m, tiny_dataset(), eo);
    EXPECT_EQ(r.instances, 5);
    EXPECT_EQ(to_json(r.init), to_json(r.refined));
    EXPECT_EQ(r.delta.mean_iou, 0.0);
    EXPECT_EQ(r.delta.ap, 0.0);
  }
}

TEST(Evaluate, DeltaIsRefinedMinusInit) {
  auto cfg = tiny_config();
  cfg.max_steps = 10;
  const auto ck = train::train(cfg, tiny_dataset()).checkpoint;
  EvalOptions eo;
  eo.augment = cfg.augment;
  const auto r = evaluate(ck, tiny_dataset(), eo, model::config_hash(cfg.model));
  EXPECT_DOUBLE_EQ(r.delta.mean_iou, r.refined.mean_iou - r.init.mean_iou);
  EXPECT_DOUBLE_EQ(r.delta.boundary_f1, r.refined.boundary_f1 - r.init.boundary_f1);
  EXPECT_DOUBLE_EQ(r.delta.ap, r.refined.ap - r.init.ap);
  EXPECT_DOUBLE_EQ(r.delta.af, r.refined.af - r.init.af);
  EXPECT_THROW(evaluate(ck, tiny_dataset(), eo, "ffffffffffffffff"), CompatibilityError);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("split"), "test");
  EXPECT_FALSE(format_report(r).empty());
}

TEST(Evaluate, FiveInstanceReportMatchesHandAssembly) {
  const auto cfg = tiny_config();
  model::Model<float> m(cfg.model);
  m.initialize(1);
  EvalOptions eo;
  eo.augment = cfg.augment;
  const auto& split = tiny_dataset().split("test");
  const auto r = evaluate(m, tiny_dataset(), eo);

  // Rebuild the initial masks step by step and score them directly.
  std::vector<metrics::Detection> dets;
  std::vector<metrics::GroundTruth> gts;
  double iou_sum = 0, f1_sum = 0, f2_sum = 0;
  for (const auto& item : split.items) {
    const auto& scene = split.scenes[static_cast<std::size_t>(item.scene)];
    const auto& gt = scene.instances[static_cast<std::size_t>(item.instance)];
    const auto inst = instance_from_mask(scene.image, item.init_mask, data::Mode::Detection, eo.augment);
    const auto mask = geometry::rasterize_mask(inst.image_polygons(), scene.image.height, scene.image.width);
    iou_sum += metrics::mask_iou(mask, gt.mask);
    f1_sum += metrics::boundary_f(mask, gt.mask, 1.0);
    f2_sum += metrics::boundary_f(mask, gt.mask, 2.0);
    dets.push_back({item.scene, gt.label, 1.0, mask});
    gts.push_back({item.scene, gt.label, gt.mask});
  }
  const double n = static_cast<double>(split.items.size());
  EXPECT_NEAR(r.init.mean_iou, iou_sum / n, 1e-12);
  EXPECT_NEAR(r.init.boundary_f1, f1_sum / n, 1e-12);
  EXPECT_NEAR(r.init.boundary_f2, f2_sum / n, 1e-12);
  EXPECT_NEAR(r.init.ap, metrics::average_precision(dets, gts).ap, 1e-12);
  EXPECT_NEAR(r.init.af, metrics::average_f(dets, gts).af, 1e-12);
}

TEST(Inference, DeformInstanceContracts) {
  const auto cfg = tiny_config();
  model::Model<float> m(cfg.model);
  m.initialize(1);
  const auto& split = tiny_dataset().split("test");
  const auto& scene = split.scenes[0];
  auto inst = instance_from_mask(scene.image, scene.instances[0].mask, data::Mode::Annotation, cfg.augment);
  ASSERT_FALSE(inst.polygons.empty());
  const auto out = deform_instance(m, inst);
  EXPECT_EQ(out.polygons, inst.polygons);  // identity at initialization
  inst.polygons.clear();
  EXPECT_THROW(deform_instance(m, inst), DegenerateError);
}
