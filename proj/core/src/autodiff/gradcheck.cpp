#include "polydeform/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "polydeform/error.hpp"

namespace polydeform::autodiff {
namespace {

double evaluate(const ScalarFunction& f) {
  Graph<double> g(GraphOptions{.grad_enabled = false, .check_finite = true});
  const auto loss = f(g);
  if (loss.numel() != 1) throw ContractError("gradient_check: function must return a scalar");
  return loss.data()[0];
}

}  // namespace

GradCheckResult gradient_check(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs,
                               const GradCheckOptions& options) {
  std::vector<Tensor<double>> params = inputs;
  std::vector<bool> prior_flags;
  for (auto& p : params) {
    prior_flags.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.drop_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Graph<double> g(GraphOptions{.grad_enabled = true, .check_finite = true});
    auto loss = f(g);
    if (loss.numel() != 1) throw ContractError("gradient_check: function must return a scalar");
    g.backward(loss);
    for (auto& p : params) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
      p.drop_grad();
    }
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    auto values = params[ti].data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const double saved = values[idx];
      values[idx] = saved + options.eps;
      const double up = evaluate(f);
      values[idx] = saved - options.eps;
      const double down = evaluate(f);
      values[idx] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[ti][idx];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.coords_checked == 1) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        result.worst_tensor = ti;
        result.worst_index = idx;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i].set_requires_grad(prior_flags[i]);
  return result;
}

}  // namespace polydeform::autodiff
