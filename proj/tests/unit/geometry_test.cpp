#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "polydeform/error.hpp"
#include "polydeform/geometry/box_ops.hpp"
#include "polydeform/geometry/contour.hpp"
#include "polydeform/geometry/morphology.hpp"
#include "polydeform/geometry/raster.hpp"
#include "polydeform/metrics/metrics.hpp"
#include "support/shapes.hpp"

using namespace polydeform;
using namespace polydeform::geometry;

namespace {

BinaryMask from_rows(const std::vector<std::string>& rows) {
  BinaryMask m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c) m.set(r, c, rows[r][c] == '#');
  return m;
}

}  // namespace

TEST(BinaryMask, RejectsBadDimensions) {
  EXPECT_THROW(BinaryMask(0, 4), ShapeError);
  EXPECT_THROW(BinaryMask(2, 2, std::vector<std::uint8_t>(3)), ShapeError);
  BinaryMask m(3, 4);
  EXPECT_EQ(m.count(), 0u);
  m.set(1, 2, true);
  EXPECT_EQ(m.count(), 1u);
  EXPECT_FALSE(m.get_or_false(-1, 0));
}

TEST(Polygon, Invariants) {
  EXPECT_THROW(Polygon({{0, 0}, {1, 1}}), ContractError);
  EXPECT_THROW(Polygon({{0, 0}, {1, 0}, {0, std::numeric_limits<double>::quiet_NaN()}}), NumericalError);
  const Polygon sq({{0, 0}, {2, 0}, {2, 2}, {0, 2}});
  EXPECT_DOUBLE_EQ(sq.signed_area(), 4.0);
  EXPECT_DOUBLE_EQ(sq.perimeter(), 8.0);
}

TEST(Contour, SquareBorderVisitsEveryBoundaryPixelOnce) {
  const auto m = fixtures::filled_rect(6, 6, 1, 1, 4, 4);
  const auto chains = trace_outer_borders(m);
  ASSERT_EQ(chains.size(), 1u);
  EXPECT_EQ(chains[0].size(), 8u);
  EXPECT_EQ(chains[0][0], (Pixel{1, 1}));
}

TEST(Contour, OneChainPerComponentAndHolesSkipped) {
  const auto m = from_rows({
      "..........",
      ".#####....",
      ".#...#..#.",
      ".#####..#.",
      "........#.",
  });
  const auto chains = trace_outer_borders(m);
  ASSERT_EQ(chains.size(), 2u);
  EXPECT_EQ(chains[0][0], (Pixel{1, 1}));
  EXPECT_EQ(chains[1][0], (Pixel{2, 8}));
}

TEST(Contour, ResampleContracts) {
  const auto chains = trace_outer_borders(fixtures::filled_rect(20, 20, 2, 2, 18, 18));
  EXPECT_THROW(resample_contour(chains[0], 0.5), ContractError);
  EXPECT_THROW(resample_contour(PixelChain{{0, 0}, {0, 1}}, 2.0), DegenerateError);
  const auto p = resample_contour(chains[0], 4.0);
  // Perimeter 60 through pixel centers.
  EXPECT_NEAR(static_cast<double>(p.size()), chain_length(chains[0]) / 4.0, 1.5);
  EXPECT_EQ(p[0], chains[0][0].center());
}

TEST(Contour, TinyComponentsAreDropped) {
  BinaryMask m(5, 5);
  m.set(2, 2, true);
  EXPECT_TRUE(extract_polygons(m, 1.0).empty());
}

TEST(Raster, ClosedSetSquare) {
  // Centers 2.5..5.5 fall inside [2,6]; centers exactly on x=6 would count too.
  const Polygon sq({{2, 2}, {6, 2}, {6, 6}, {2, 6}});
  const auto m = rasterize_mask({sq}, 10, 10);
  EXPECT_EQ(m.count(), 16u);
  EXPECT_TRUE(m.at(2, 2));
  EXPECT_FALSE(m.at(6, 6));
  const Polygon on_centers({{2.5, 2.5}, {5.5, 2.5}, {5.5, 5.5}, {2.5, 5.5}});
  EXPECT_EQ(rasterize_mask({on_centers}, 10, 10).count(), 16u);
}

TEST(Raster, EvenOddWithinAPolygonUnionAcross) {
  // Pentagram: the central pentagon is wound twice, so even-odd leaves it empty.
  std::vector<Vec2> star;
  for (int k = 0; k < 5; ++k) {
    const double t = -std::numbers::pi / 2 + 4 * std::numbers::pi * k / 5;
    star.push_back({20 + 18 * std::cos(t), 20 + 18 * std::sin(t)});
  }
  const auto m = rasterize_mask({Polygon(star)}, 40, 40);
  EXPECT_FALSE(m.at(20, 20));
  EXPECT_TRUE(m.at(5, 20));  // inside the top spike

  const Polygon outer({{0, 0}, {10, 0}, {10, 10}, {0, 10}});
  const Polygon inner({{3, 3}, {7, 3}, {7, 7}, {3, 7}});
  EXPECT_EQ(rasterize_mask({outer, inner}, 10, 10).count(), 100u);
  const Polygon apart({{12, 0}, {14, 0}, {14, 2}, {12, 2}});
  EXPECT_EQ(rasterize_mask({inner, apart}, 10, 16).count(), 16u + 4u);
}

TEST(Raster, ExtractAtUnitSpacingRoundTripsExactly) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const auto m = fixtures::random_blob(rng, 80);
    const auto polys = extract_polygons(m, 1.0);
    ASSERT_EQ(polys.size(), 1u);
    EXPECT_EQ(rasterize_mask(polys, 80, 80), m) << "trial " << trial;
  }
  const auto two = from_rows({
      "#####.....",
      "#####..###",
      ".......###",
      ".......###",
  });
  EXPECT_EQ(rasterize_mask(extract_polygons(two, 1.0), 4, 10), two);
}

TEST(Raster, SpacingThreeRoundTripIoU) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = fixtures::random_blob(rng, 96);
    const auto back = rasterize_mask(extract_polygons(m, 3.0), 96, 96);
    EXPECT_GE(metrics::mask_iou(m, back), 0.90) << "trial " << trial;
  }
}

TEST(Raster, EdgeSamplesAreDenseAndShared) {
  const std::vector<Vec2> v{{0, 0}, {10, 0}, {10, 3.5}};
  const auto layout = edge_sample_layout(v, 1.0);
  const auto pts = evaluate_samples(layout, v);
  EXPECT_EQ(layout.size(), 10u + 4u + 11u);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_LE(distance(pts[i], pts[(i + 1) % pts.size()]), 1.0 + 1e-12);
  }
  EXPECT_THROW(edge_subdivisions(1.0, 0.0), ContractError);
  const auto seg = sample_segment({0, 0}, {3, 4}, 1.0);
  EXPECT_EQ(seg.size(), 6u);
  EXPECT_EQ(seg.back(), (Vec2{3, 4}));
}

TEST(BoxOps, FitExpandClipIoU) {
  const auto m = fixtures::filled_rect(20, 20, 2, 4, 10, 8);
  const Box b = fit_box(m);
  EXPECT_EQ(b, (Box{4, 2, 8, 10}));
  EXPECT_THROW(fit_box(BinaryMask(3, 3)), DegenerateError);

  const Box bounds{0, 0, 20, 20};
  const Box e = expand_box(b, 0.5, 1.0, bounds);
  EXPECT_DOUBLE_EQ(e.x0, 4 - 0.5 * 4 / 2 - 1);
  EXPECT_DOUBLE_EQ(e.y1, 10 + 0.5 * 8 / 2 + 1);
  EXPECT_EQ(clip_box({-5, -5, 30, 3}, bounds), (Box{0, 0, 20, 3}));

  EXPECT_DOUBLE_EQ(box_iou(b, b), 1.0);
  const Box c{6, 2, 10, 10};
  EXPECT_DOUBLE_EQ(box_iou(b, c), box_iou(c, b));
  EXPECT_DOUBLE_EQ(box_iou(b, c), 16.0 / 48.0);
  EXPECT_EQ(polygon_bounds({Polygon({{1, 2}, {5, 0}, {3, 7}})}), (Box{1, 0, 5, 7}));
}

TEST(Morphology, DilationOfSquareByThree) {
  const auto m = fixtures::filled_rect(60, 60, 10, 10, 50, 50);
  const auto d = dilate_square(m, 3);
  EXPECT_EQ(d.count(), 46u * 46u);
  EXPECT_NEAR(metrics::mask_iou(m, d), 1600.0 / 2116.0, 1e-12);
  EXPECT_EQ(erode_square(d, 3), m);
}

TEST(Morphology, DistanceTransformMatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution seed(0.03);
  for (int trial = 0; trial < 5; ++trial) {
    BinaryMask m(17, 23);
    for (int r = 0; r < 17; ++r)
      for (int c = 0; c < 23; ++c) m.set(r, c, seed(rng));
    const auto dt = squared_distance_transform(m);
    for (int r = 0; r < 17; ++r)
      for (int c = 0; c < 23; ++c) {
        double best = std::numeric_limits<double>::infinity();
        for (int rr = 0; rr < 17; ++rr)
          for (int cc = 0; cc < 23; ++cc) {
            if (m.at(rr, cc)) best = std::min(best, double((r - rr) * (r - rr) + (c - cc) * (c - cc)));
          }
        EXPECT_EQ(dt[static_cast<std::size_t>(r) * 23 + c], best);
      }
  }
}

TEST(Morphology, ComponentsAndBoundary) {
  const auto m = from_rows({
      "##...",
      "##..#",
      "...#.",
      ".....",
      "#....",
  });
  const auto cc = connected_components(m);
  EXPECT_EQ(cc.count, 3);  // diagonal pixels join under 8-connectivity
  EXPECT_EQ(cc.labels[0], 1);
  EXPECT_EQ(cc.labels[9], 2);

  const auto sq = fixtures::filled_rect(8, 8, 1, 1, 7, 7);
  EXPECT_EQ(boundary_pixels(sq).count(), 20u);
  EXPECT_EQ(mask_and_not(sq, boundary_pixels(sq)).count(), 16u);
  EXPECT_EQ(mask_or(sq, BinaryMask(8, 8)), sq);
  EXPECT_EQ(mask_and(sq, BinaryMask(8, 8)).count(), 0u);
}
