#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "polydeform/autodiff/ops.hpp"
#include "polydeform/geometry/contour.hpp"
#include "polydeform/geometry/raster.hpp"
#include "polydeform/metrics/metrics.hpp"
#include "polydeform/model/losses.hpp"
#include "polydeform/model/model.hpp"

namespace pd = polydeform;
using pd::autodiff::Graph;
using pd::autodiff::Tensor;
using pd::geometry::Polygon;

namespace {

Polygon wobbly(int n, double cx, double cy, double r, double phase) {
  std::vector<pd::geometry::Vec2> pts;
  for (int i = 0; i < n; ++i) {
    const double t = 2 * std::numbers::pi * i / n;
    const double rr = r * (1 + 0.15 * std::sin(5 * t + phase));
    pts.push_back({cx + rr * std::cos(t), cy + rr * std::sin(t)});
  }
  return Polygon(pts);
}

template <typename T>
Tensor<T> random_tensor(pd::autodiff::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<T> v(pd::autodiff::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>::from_data(std::move(shape), std::move(v));
}

void BM_ChamferForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto p = wobbly(n, 64, 64, 40, 0.0);
  const std::vector<Polygon> q{wobbly(3 * n, 64, 64, 38, 0.7)};
  const pd::model::LossConfig cfg;
  for (auto _ : state) {
    Graph<float> g;
    auto v = pd::model::polygon_to_tensor<float>(p, true);
    auto loss = pd::model::chamfer_loss(g, v, q, cfg);
    g.backward(loss);
    benchmark::DoNotOptimize(v.grad().data());
  }
}
BENCHMARK(BM_ChamferForwardBackward)->Arg(16)->Arg(40)->Arg(100);

void BM_Conv2d3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  auto x = random_tensor<float>({c, s, s}, 1);
  auto w = random_tensor<float>({c, c, 3, 3}, 2);
  auto b = random_tensor<float>({c}, 3);
  for (auto _ : state) {
    Graph<float> g({.grad_enabled = false});
    benchmark::DoNotOptimize(pd::autodiff::ops::conv2d(g, x, w, b, 1, 1).data().data());
  }
}
BENCHMARK(BM_Conv2d3x3)->Args({16, 64})->Args({32, 32})->Args({64, 16});

void BM_TrainingStep(benchmark::State& state) {
  pd::model::ModelConfig cfg;
  cfg.features.crop_size = static_cast<int>(state.range(0));
  pd::model::Model<float> m(cfg);
  m.initialize(1);
  const auto s = static_cast<std::size_t>(cfg.features.crop_size);
  auto crop = random_tensor<float>({3, s, s}, 4);
  const double c = s / 2.0;
  const auto init = wobbly(24, c, c, 0.35 * s, 0.0);
  const std::vector<Polygon> gt{wobbly(60, c, c, 0.33 * s, 0.4)};
  const pd::model::LossConfig lc;
  for (auto _ : state) {
    Graph<float> g;
    const auto fmap = m.feature_map(g, crop);
    const auto out = m.deform(g, fmap, pd::model::polygon_to_tensor<float>(init));
    auto loss = pd::model::total_loss(g, out.vertices, gt, lc);
    g.backward(loss.total);
    benchmark::DoNotOptimize(loss.chamfer);
  }
}
BENCHMARK(BM_TrainingStep)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_RasterizeAndExtract(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto poly = wobbly(80, size / 2.0, size / 2.0, size * 0.4, 0.0);
  for (auto _ : state) {
    const auto mask = pd::geometry::rasterize_mask({poly}, size, size);
    benchmark::DoNotOptimize(pd::geometry::extract_polygons(mask, 10.0).size());
  }
}
BENCHMARK(BM_RasterizeAndExtract)->Arg(128)->Arg(512);

void BM_BoundaryF(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto a = pd::geometry::rasterize_mask({wobbly(80, size / 2.0, size / 2.0, size * 0.4, 0.0)}, size, size);
  const auto b = pd::geometry::rasterize_mask({wobbly(80, size / 2.0, size / 2.0, size * 0.38, 0.5)}, size, size);
  for (auto _ : state) benchmark::DoNotOptimize(pd::metrics::boundary_f(a, b, 2.0));
}
BENCHMARK(BM_BoundaryF)->Arg(128)->Arg(512);

void BM_AveragePrecision(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<pd::metrics::Detection> dets;
  std::vector<pd::metrics::GroundTruth> gts;
  for (int i = 0; i < n; ++i) {
    const double cx = 20 + 30 * (i % 8), cy = 20 + 30 * (i / 8 % 8);
    gts.push_back({i / 64, i % 3, pd::geometry::rasterize_mask({wobbly(30, cx, cy, 12, 0)}, 256, 256)});
    dets.push_back({i / 64, i % 3, 1.0 - 0.001 * i, pd::geometry::rasterize_mask({wobbly(30, cx + 1, cy, 11, 1)}, 256, 256)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(pd::metrics::average_precision(dets, gts).ap);
}
BENCHMARK(BM_AveragePrecision)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

// The packaged libbenchmark_main.a is LTO bytecode from another compiler release.
BENCHMARK_MAIN();
