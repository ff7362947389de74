#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "polydeform/autodiff/graph.hpp"
#include "polydeform/autodiff/tensor.hpp"

namespace polydeform::autodiff {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates checked per tensor; 0 checks every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// Builds the scalar loss on the given graph from the captured tensors.
using ScalarFunction = std::function<Tensor<double>(Graph<double>&)>;

/// Compares reverse-mode gradients of f against central differences for
/// every tensor in `inputs` (which f must read through shared storage).
/// Relative error is |a - n| / max(1, |a|, |n|).
///
/// Throws ContractError when f returns a non-scalar.
GradCheckResult gradient_check(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs,
                               const GradCheckOptions& options = {});

}  // namespace polydeform::autodiff
