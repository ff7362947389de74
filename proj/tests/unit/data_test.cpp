#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>

#include "polydeform/data/corrupt.hpp"
#include "polydeform/data/dataset.hpp"
#include "polydeform/data/sample.hpp"
#include "polydeform/data/scene.hpp"
#include "polydeform/error.hpp"
#include "polydeform/geometry/box_ops.hpp"
#include "polydeform/geometry/contour.hpp"
#include "polydeform/geometry/morphology.hpp"
#include "polydeform/geometry/raster.hpp"
#include "polydeform/io/png_io.hpp"
#include "polydeform/metrics/metrics.hpp"
#include "support/shapes.hpp"

using namespace polydeform;
using namespace polydeform::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("polydeform_data_test_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::vector<std::uint8_t>> read_tree(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return out;
}

DatasetConfig tiny_dataset() {
  DatasetConfig cfg;
  cfg.scene.height = cfg.scene.width = 96;
  cfg.scene.min_size = 24;
  cfg.scene.max_size = 40;
  cfg.scene.min_visible_pixels = 80;
  cfg.train_instances = 12;
  cfg.val_instances = 4;
  cfg.test_instances = 4;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST(Scene, SameSeedIsBitIdentical) {
  const SceneConfig cfg;
  const auto a = generate_scene(17, cfg), b = generate_scene(17, cfg);
  EXPECT_EQ(a.image, b.image);
  ASSERT_EQ(a.instances.size(), b.instances.size());
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    EXPECT_EQ(a.instances[i].mask, b.instances[i].mask);
    EXPECT_EQ(a.instances[i].polygons, b.instances[i].polygons);
  }
  EXPECT_NE(generate_scene(18, cfg).image, a.image);
}

TEST(Scene, ImagesAreInUnitRangeAndInstancesValid) {
  const SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = generate_scene(seed, cfg);
    EXPECT_EQ(s.image.height, cfg.height);
    for (float v : s.image.data) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
    for (const auto& inst : s.instances) {
      EXPECT_GE(static_cast<int>(inst.mask.count()), cfg.min_visible_pixels);
      EXPECT_FALSE(has_holes(inst.mask));
      EXPECT_GE(inst.label, 0);
      EXPECT_LT(inst.label, kNumClasses);
      // Polygons through boundary pixel centers reproduce the mask closely.
      const auto back = geometry::rasterize_mask(inst.polygons, cfg.height, cfg.width);
      EXPECT_GE(metrics::mask_iou(back, inst.mask), 0.98) << "seed " << seed;
    }
  }
}

TEST(Scene, NoOccludersMeansOneComponent) {
  SceneConfig cfg;
  cfg.occluder_probability = 0.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    for (const auto& inst : generate_scene(seed, cfg).instances) {
      EXPECT_EQ(geometry::connected_components(inst.mask).count, 1) << "seed " << seed;
      EXPECT_EQ(inst.polygons.size(), 1u);
    }
  }
}

TEST(Scene, AlwaysOccludedSplitsAtLeastThirtyPercent) {
  SceneConfig cfg;
  cfg.occluder_probability = 1.0;
  int total = 0, split = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (const auto& inst : generate_scene(seed, cfg).instances) {
      ++total;
      split += inst.polygons.size() >= 2;
    }
  }
  ASSERT_GT(total, 0);
  EXPECT_GE(static_cast<double>(split) / total, 0.30) << split << "/" << total;
}

TEST(Scene, ClassNamesRoundTrip) {
  for (int k = 0; k < kNumClasses; ++k) EXPECT_EQ(class_id(class_names()[k]), k);
  EXPECT_THROW(class_id("truck"), ValidationError);
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
}

TEST(Corruption, NoneIsIdentity) {
  std::mt19937_64 rng(41);
  const auto gt = fixtures::random_blob(rng, 80);
  EXPECT_EQ(corrupt_once(gt, CorruptionConfig::none(), 3), gt);
  const auto m = corrupt_mask(gt, CorruptionConfig::none(), 3);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(*m, gt);
}

TEST(Corruption, DilationByThreeOnSquare) {
  auto cfg = CorruptionConfig::none();
  cfg.min_radius = cfg.max_radius = 3;
  const auto gt = fixtures::filled_rect(80, 80, 20, 20, 60, 60);
  const auto m = corrupt_once(gt, cfg, 1);
  EXPECT_NEAR(metrics::mask_iou(gt, m), 1600.0 / 2116.0, 1e-12);
}

TEST(Corruption, DefaultBandHoldsForMostDraws) {
  const CorruptionConfig cfg;
  const SceneConfig scene_cfg;
  int inside = 0, total = 0;
  for (std::uint64_t seed = 0; total < 1000; ++seed) {
    const auto scene = generate_scene(seed, scene_cfg);
    for (std::size_t i = 0; i < scene.instances.size() && total < 1000; ++i, ++total) {
      const auto m = corrupt_mask(scene.instances[i].mask, cfg, mix_seed(seed, i));
      if (!m) continue;
      const double iou = metrics::mask_iou(*m, scene.instances[i].mask);
      inside += iou >= cfg.iou_min && iou <= cfg.iou_max;
    }
  }
  EXPECT_GE(inside, 950);
}

TEST(Corruption, ConfigValidation) {
  CorruptionConfig cfg;
  cfg.min_radius = 5;
  cfg.max_radius = 1;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_THROW(corruption_config_from_json({{"nope", 1}}), ValidationError);
  const CorruptionConfig d;
  EXPECT_EQ(to_json(corruption_config_from_json(to_json(d))), to_json(d));
}

TEST(CropTransform, InvertibleOnCoordinates) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 200.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double x0 = u(rng), y0 = u(rng);
    const CropTransform t{{x0, y0, x0 + 5 + u(rng), y0 + 5 + u(rng)}, 128, trial % 2 == 1};
    const auto poly = fixtures::random_polygon(rng, 8, {u(rng), u(rng)}, 30);
    const auto back = t.to_image(t.to_crop(poly));
    for (std::size_t i = 0; i < poly.size(); ++i) {
      EXPECT_NEAR(back[i].x, poly[i].x, 1e-6);
      EXPECT_NEAR(back[i].y, poly[i].y, 1e-6);
    }
  }
}

TEST(Sample, SquareBoxWithoutAugmentationLandsAtScaledCoordinates) {
  SyntheticScene scene;
  scene.image = Image(100, 100, 3);
  SceneInstance inst;
  inst.mask = fixtures::filled_rect(100, 100, 20, 30, 60, 70);  // tight box x 30..70, y 20..60
  inst.polygons = {geometry::Polygon({{30, 20}, {70, 20}, {70, 60}, {30, 60}})};
  scene.instances.push_back(inst);
  AugmentConfig cfg;
  cfg.crop_size = 64;
  cfg.test_expand_frac = 0.0;
  const auto s = make_sample(scene, 0, inst.mask, Mode::Detection, Provenance::GtBox, false, cfg, 1);
  EXPECT_EQ(s.transform.box, (geometry::Box{30, 20, 70, 60}));
  ASSERT_EQ(s.gt_polygons.size(), 1u);
  EXPECT_EQ(s.gt_polygons[0][0], (geometry::Vec2{0, 0}));
  EXPECT_EQ(s.gt_polygons[0][2], (geometry::Vec2{64, 64}));
  EXPECT_FALSE(s.transform.flipped);

  cfg.test_expand_frac = 0.02;
  const auto e = make_sample(scene, 0, inst.mask, Mode::Detection, Provenance::GtBox, false, cfg, 1);
  EXPECT_DOUBLE_EQ(e.transform.box.x0, 30 - 0.02 * 40 / 2);
  const auto a = make_sample(scene, 0, inst.mask, Mode::Annotation, Provenance::ProposedBox, false, cfg, 1);
  EXPECT_EQ(a.transform.box, (geometry::Box{25, 15, 75, 65}));
  EXPECT_EQ(a.provenance, Provenance::GtBox);
}

TEST(Sample, FlipIsAnInvolution) {
  const auto scene = generate_scene(3, SceneConfig{});
  AugmentConfig cfg;
  const auto s = make_sample(scene, 0, scene.instances[0].mask, Mode::Detection, Provenance::GtBox, false, cfg, 2);
  const auto ff = flip_sample(flip_sample(s));
  EXPECT_EQ(ff.crop, s.crop);
  EXPECT_EQ(ff.init_polygons, s.init_polygons);
  ASSERT_EQ(ff.gt_polygons.size(), s.gt_polygons.size());
  for (std::size_t k = 0; k < s.gt_polygons.size(); ++k) {
    for (std::size_t i = 0; i < s.gt_polygons[k].size(); ++i) {
      EXPECT_NEAR(ff.gt_polygons[k][i].x, s.gt_polygons[k][i].x, 1e-12);
      EXPECT_EQ(ff.gt_polygons[k][i].y, s.gt_polygons[k][i].y);
    }
  }
  EXPECT_EQ(ff.transform.flipped, s.transform.flipped);
  const auto f = flip_sample(s);
  // The flipped transform still maps crop coordinates back to the image.
  const auto p = f.transform.to_image(f.gt_polygons[0]);
  const auto q = s.transform.to_image(s.gt_polygons[0]);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_NEAR(p[i].x, q[i].x, 1e-9);
    EXPECT_NEAR(p[i].y, q[i].y, 1e-9);
  }
}

TEST(Sample, FlippedMaskPolygonsAgreeWithFlippedPolygons) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = fixtures::random_blob(rng, 64);
    geometry::BinaryMask mirrored(64, 64);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) mirrored.set(r, 63 - c, m.at(r, c));
    std::vector<geometry::Polygon> flipped;
    for (const auto& p : geometry::extract_polygons(m, 1.0)) {
      std::vector<geometry::Vec2> v;
      for (const auto& q : p.vertices()) v.push_back({64 - q.x, q.y});
      flipped.emplace_back(std::move(v));
    }
    const auto a = geometry::rasterize_mask(geometry::extract_polygons(mirrored, 1.0), 64, 64);
    const auto b = geometry::rasterize_mask(flipped, 64, 64);
    EXPECT_EQ(metrics::boundary_f(a, b, 1.0), 1.0);
  }
}

TEST(Sample, JitterStaysWithinThreePercent) {
  const auto scene = generate_scene(5, SceneConfig{});
  AugmentConfig cfg;
  const auto& inst = scene.instances[0];
  const auto tight = geometry::fit_box(inst.mask);
  const double w = tight.width(), h = tight.height();
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto s = make_sample(scene, 0, inst.mask, Mode::Detection, Provenance::GtBox, true, cfg, seed);
    const auto& b = s.transform.box;
    EXPECT_LE(std::abs(b.x0 - tight.x0), 0.03 * w + 1e-9);
    EXPECT_LE(std::abs(b.x1 - tight.x1), 0.03 * w + 1e-9);
    EXPECT_LE(std::abs(b.y0 - tight.y0), 0.03 * h + 1e-9);
    EXPECT_LE(std::abs(b.y1 - tight.y1), 0.03 * h + 1e-9);
  }
}

TEST(Sample, PolygonsInsideCropAndBoxFilter) {
  const SceneConfig scene_cfg;
  AugmentConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto scene = generate_scene(seed, scene_cfg);
    for (std::size_t i = 0; i < scene.instances.size(); ++i) {
      const auto init = corrupt_mask(scene.instances[i].mask, CorruptionConfig{}, seed * 10 + i);
      if (!init) continue;
      const auto s = make_sample(scene, static_cast<int>(i), *init, Mode::Detection, Provenance::ProposedBox, true,
                                 cfg, seed);
      for (const auto* set : {&s.init_polygons, &s.gt_polygons}) {
        for (const auto& p : *set) {
          for (const auto& v : p.vertices()) {
            EXPECT_GE(v.x, 0.0);
            EXPECT_LE(v.x, cfg.crop_size);
            EXPECT_GE(v.y, 0.0);
            EXPECT_LE(v.y, cfg.crop_size);
          }
        }
      }
      EXPECT_EQ(s.usable, s.box_iou > 0.5 && !s.init_polygons.empty());
    }
  }
}

TEST(Sample, ModeNames) {
  EXPECT_EQ(parse_mode("annotation"), Mode::Annotation);
  EXPECT_EQ(parse_mode(to_string(Mode::Detection)), Mode::Detection);
  EXPECT_THROW(parse_mode("both"), ValidationError);
}

TEST(Dataset, SerializedBytesAreDeterministic) {
  const auto cfg = tiny_dataset();
  const auto a = scratch("a"), b = scratch("b");
  save_dataset(build_dataset(cfg), a);
  save_dataset(build_dataset(cfg), b);
  const auto ta = read_tree(a);
  EXPECT_EQ(ta, read_tree(b));
  EXPECT_TRUE(ta.count("manifest.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, SaveLoadSaveRoundTrip) {
  const auto cfg = tiny_dataset();
  const auto ds = build_dataset(cfg);
  for (const auto& name : {"train", "val", "test"}) {
    const auto& split = ds.split(name);
    EXPECT_FALSE(split.items.empty()) << name;
  }
  EXPECT_EQ(static_cast<int>(ds.split("train").items.size()), cfg.train_instances);
  EXPECT_THROW(ds.split("holdout"), ContractError);

  const auto a = scratch("c"), b = scratch("d");
  save_dataset(ds, a);
  const auto loaded = load_dataset(a);
  EXPECT_EQ(dataset_config_hash(loaded.config), dataset_config_hash(cfg));
  ASSERT_EQ(loaded.split("test").items.size(), ds.split("test").items.size());
  for (std::size_t i = 0; i < ds.split("test").items.size(); ++i) {
    EXPECT_EQ(loaded.split("test").items[i].init_mask, ds.split("test").items[i].init_mask);
  }
  save_dataset(loaded, b);
  EXPECT_EQ(read_tree(a), read_tree(b));

  auto manifest = io::read_file(a / "manifest.json");
  manifest.resize(manifest.size() / 2);
  io::write_file(a / "manifest.json", manifest);
  EXPECT_THROW(load_dataset(a), ValidationError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, ConfigJson) {
  const auto cfg = tiny_dataset();
  EXPECT_EQ(to_json(dataset_config_from_json(to_json(cfg))), to_json(cfg));
  auto j = to_json(cfg);
  j["extra"] = true;
  EXPECT_THROW(dataset_config_from_json(j), ValidationError);
  auto other = cfg;
  other.seed = 10;
  EXPECT_NE(dataset_config_hash(other), dataset_config_hash(cfg));
}
