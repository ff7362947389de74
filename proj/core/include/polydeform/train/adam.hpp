#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polydeform/autodiff/checkpoint.hpp"
#include "polydeform/autodiff/parameters.hpp"

namespace polydeform::train {

using autodiff::ParameterSet;
using autodiff::Tensor;

struct AdamConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction and decoupled weight decay:
///   p <- p - lr*wd*p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
class Adam {
 public:
  Adam(const ParameterSet<T>& params, AdamConfig cfg);

  /// Applies one update from the parameters' current gradients. Parameters
  /// without a gradient buffer are treated as having zero gradient. Throws
  /// NumericalError naming the first parameter with a non-finite gradient
  /// (before anything is modified).
  void step(ParameterSet<T>& params);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  /// Moments stored as "adam.m/<name>" and "adam.v/<name>".
  void append_state(autodiff::Checkpoint& ckpt, const ParameterSet<T>& params) const;
  void restore_state(const autodiff::Checkpoint& ckpt, const ParameterSet<T>& params, std::int64_t t);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

/// Scales all gradients so their global L2 norm is at most max_norm
/// (max_norm <= 0 disables). Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace polydeform::train
