#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "polydeform/error.hpp"
#include "polydeform/geometry/morphology.hpp"
#include "polydeform/metrics/metrics.hpp"
#include "support/metric_oracles.hpp"

using namespace polydeform;
using namespace polydeform::metrics;
using fixtures::rect_mask;

TEST(MaskIoU, SymmetricAndSelfIsOne) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = fixtures::random_blob(rng, 64), b = fixtures::random_blob(rng, 64);
    EXPECT_EQ(mask_iou(a, b), mask_iou(b, a));
    EXPECT_EQ(mask_iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(mask_iou(a, b), fixtures::naive_iou(a, b));
  }
  EXPECT_EQ(mask_iou(BinaryMask(3, 3), BinaryMask(3, 3)), 1.0);
  EXPECT_THROW(mask_iou(BinaryMask(3, 3), BinaryMask(3, 4)), ShapeError);
}

TEST(BoundaryF, IdenticalMasksScoreOne) {
  const auto m = rect_mask(20, 20, 4, 4, 12, 15);
  EXPECT_EQ(boundary_f(m, m, 0.0), 1.0);
  EXPECT_EQ(boundary_f(m, BinaryMask(20, 20), 1.0), 0.0);
  EXPECT_THROW(boundary_f(m, m, -1.0), ContractError);
}

TEST(BoundaryF, DilatedSquareByHand) {
  // Square of side 10 against its 2 px dilation: the dilated ring is exactly
  // 2 px away except 3 pixels per corner at sqrt(5) and sqrt(8).
  const auto gt = rect_mask(30, 30, 10, 10, 20, 20);
  const auto pred = geometry::dilate_square(gt, 2);
  EXPECT_EQ(boundary_f(pred, gt, 1.0), 0.0);
  const auto s = boundary_score(pred, gt, 2.0);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  EXPECT_DOUBLE_EQ(s.precision, 40.0 / 52.0);
  EXPECT_NEAR(s.f, 20.0 / 23.0, 1e-12);
}

TEST(BoundaryF, MatchesBruteForceAndIsMonotone) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = fixtures::random_blob(rng, 72), b = fixtures::random_blob(rng, 72);
    double prev = -1;
    for (double t : {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0}) {
      const double f = boundary_f(a, b, t);
      EXPECT_GE(f, prev) << "trial " << trial << " t " << t;
      prev = f;
      if (trial < 10) {
        EXPECT_NEAR(f, fixtures::naive_boundary_f(a, b, t), 1e-12);
      }
    }
  }
}

TEST(AveragePrecision, TrivialCases) {
  const auto m = rect_mask(20, 20, 2, 2, 10, 10);
  EXPECT_EQ(average_precision({{0, 0, 1.0, m}}, {{0, 0, m}}).ap, 1.0);
  EXPECT_EQ(average_precision({}, {{0, 0, m}}).ap, 0.0);
  const auto flagged = average_precision({{0, 3, 1.0, m}}, {{0, 0, m}});
  EXPECT_EQ(flagged.per_class.at(3), 0.0);
  EXPECT_EQ(flagged.flagged_classes, std::vector<int>{3});
  EXPECT_EQ(flagged.ap, 0.0);
  // Same mask on another image never matches.
  EXPECT_EQ(average_precision({{1, 0, 1.0, m}}, {{0, 0, m}}).ap, 0.0);
}

TEST(AveragePrecision, MixedFixtureByHand) {
  const auto f = fixtures::mixed_fixture();
  const auto r = average_precision(f.dets, f.gts);
  EXPECT_NEAR(r.ap, f.ap, 1e-6);
  EXPECT_NEAR(r.ap50, f.ap50, 1e-6);
  EXPECT_NEAR(r.ap, fixtures::naive_ap(f.dets, f.gts, default_iou_thresholds()), 1e-12);

  const auto pairs = match_detections(f.dets, f.gts, default_iou_thresholds());
  ASSERT_EQ(pairs.size(), 10u);
  EXPECT_EQ(pairs[0].size(), 2u);
  EXPECT_EQ(pairs[5], (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}}));
  EXPECT_EQ(pairs[9], (std::vector<std::pair<std::size_t, std::size_t>>{{2, 0}}));
}

TEST(AveragePrecision, PerfectDetectionsWithUniqueScoresScoreOne) {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  for (int i = 0; i < 6; ++i) {
    const auto m = rect_mask(30, 30, i * 4, i, i * 4 + 3, i + 9);
    gts.push_back({i % 2, i % 3, m});
    dets.push_back({i % 2, i % 3, 1.0 - 0.1 * i, m});
  }
  EXPECT_EQ(average_precision(dets, gts).ap, 1.0);
  const auto af = average_f(dets, gts);
  EXPECT_EQ(af.af, 1.0);
  EXPECT_FALSE(af.undefined);
}

TEST(AveragePrecision, MatchesBruteForceOnRandomFixtures) {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<int> pos(0, 20), size(4, 12), lab(0, 1), img(0, 1), count(0, 10);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
    const int ng = count(rng), nd = count(rng);
    for (int i = 0; i < ng; ++i) {
      const int r = pos(rng), c = pos(rng);
      gts.push_back({img(rng), lab(rng), rect_mask(32, 32, r, c, r + size(rng), c + size(rng))});
    }
    for (int i = 0; i < nd; ++i) {
      const int r = pos(rng), c = pos(rng);
      // Half of the detections are jittered copies of a ground truth.
      if (ng > 0 && i % 2 == 0) {
        const auto& g = gts[static_cast<std::size_t>(i) % gts.size()];
        dets.push_back({g.image, g.label, score(rng), i % 3 == 0 ? geometry::dilate_square(g.mask, 1) : g.mask});
      } else {
        dets.push_back({img(rng), lab(rng), score(rng), rect_mask(32, 32, r, c, r + size(rng), c + size(rng))});
      }
    }
    const auto thr = default_iou_thresholds();
    EXPECT_NEAR(average_precision(dets, gts, thr).ap, fixtures::naive_ap(dets, gts, thr), 1e-9) << trial;
    const double naive_af = fixtures::naive_af(dets, gts, thr, 1.0);
    const auto af = average_f(dets, gts, thr, 1.0);
    if (naive_af < 0) {
      EXPECT_TRUE(af.undefined);
      EXPECT_EQ(af.af, 0.0);
    } else {
      EXPECT_NEAR(af.af, naive_af, 1e-9) << trial;
    }
  }
}

TEST(AveragePrecision, PermutationInvariant) {
  auto f = fixtures::mixed_fixture();
  f.dets.push_back({0, 1, 0.95, rect_mask(40, 40, 30, 0, 38, 6)});
  const double ap = average_precision(f.dets, f.gts).ap;
  const double af = average_f(f.dets, f.gts).af;
  std::mt19937_64 rng(34);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(f.dets.begin(), f.dets.end(), rng);
    EXPECT_EQ(average_precision(f.dets, f.gts).ap, ap);
    EXPECT_EQ(average_f(f.dets, f.gts).af, af);
  }
}

TEST(AverageF, TwoInstanceFixtureByHand) {
  // One exact prediction (true positive at all 10 thresholds, F = 1) and one
  // 2 px dilation (IoU 100/196, true positive only at 0.5).
  const auto g0 = rect_mask(40, 40, 2, 2, 10, 10);
  const auto g1 = rect_mask(40, 40, 20, 20, 30, 30);
  const std::vector<GroundTruth> gts{{0, 0, g0}, {0, 0, g1}};
  const std::vector<Detection> dets{{0, 0, 0.9, g0}, {0, 0, 0.8, geometry::dilate_square(g1, 2)}};
  const auto at1 = average_f(dets, gts, default_iou_thresholds(), 1.0);
  EXPECT_EQ(at1.true_positive_pairs, 11u);
  EXPECT_NEAR(at1.af, 10.0 / 11.0, 1e-12);
  const auto at2 = average_f(dets, gts, default_iou_thresholds(), 2.0);
  EXPECT_NEAR(at2.af, (10.0 + 20.0 / 23.0) / 11.0, 1e-12);
}

TEST(AverageF, NoTruePositivesIsFlagged) {
  const auto r = average_f({{0, 0, 1.0, rect_mask(20, 20, 0, 0, 3, 3)}}, {{0, 0, rect_mask(20, 20, 10, 10, 15, 15)}});
  EXPECT_TRUE(r.undefined);
  EXPECT_EQ(r.af, 0.0);
  EXPECT_THROW(average_f({}, {}, {}), ContractError);
}

TEST(Thresholds, TenStepsFromHalf) {
  const auto t = default_iou_thresholds();
  ASSERT_EQ(t.size(), 10u);
  EXPECT_DOUBLE_EQ(t.front(), 0.5);
  EXPECT_DOUBLE_EQ(t.back(), 0.95);
}
