#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "polydeform/autodiff/tensor.hpp"

namespace polydeform::autodiff {

struct GraphOptions {
  /// When false nothing is recorded and outputs never require gradients.
  bool grad_enabled = true;
#ifdef NDEBUG
  bool check_finite = false;
#else
  bool check_finite = true;
#endif
};

/// Tape of executed operations. Ops append a backward closure as they run,
/// so the tape is already in topological order; backward() replays it in
/// reverse exactly once. A graph and the tensors it produces belong to one
/// thread.
template <typename T>
class Graph {
 public:
  explicit Graph(GraphOptions options = {}) : options_(options) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return options_.grad_enabled; }
  bool check_finite() const { return options_.check_finite; }

  /// True when an op over these inputs must be recorded.
  bool tracks(std::initializer_list<const Tensor<T>*> inputs) const;
  bool tracks(const std::vector<Tensor<T>>& inputs) const;

  void record(std::string_view op, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  /// Throws ContractError for non-scalar losses and StaleGraphError when the
  /// tape was already consumed.
  void backward(Tensor<T>& loss);

  /// Drops the tape so the graph can be reused.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::string>& op_names() const { return names_; }

  /// Throws NumericalError naming `op` when `t` holds NaN or Inf (only when
  /// check_finite is enabled).
  void verify_finite(std::string_view op, const Tensor<T>& t) const;

 private:
  GraphOptions options_;
  std::vector<std::function<void()>> nodes_;
  std::vector<std::string> names_;
  bool consumed_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace polydeform::autodiff
