#include "polydeform/train/adam.hpp"

#include <cmath>
#include <utility>

#include "polydeform/error.hpp"

namespace polydeform::train {

template <typename T>
Adam<T>::Adam(const ParameterSet<T>& params, AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr > 0)) throw ValidationError("adam: lr must be > 0");
  if (!(cfg.weight_decay >= 0)) throw ValidationError("adam: weight_decay must be >= 0");
  if (!(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1)) {
    throw ValidationError("adam: betas must be in [0, 1)");
  }
  for (const auto& [name, p] : params.entries()) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step(ParameterSet<T>& params) {
  if (params.size() != m_.size()) throw ContractError("adam: parameter set changed");
  for (const auto& [name, p] : params.entries()) {
    if (!p.has_grad()) continue;
    for (T g : std::as_const(p).grad()) {
      if (!std::isfinite(static_cast<double>(g))) throw NumericalError("non-finite gradient in parameter " + name);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double decay = cfg_.lr * cfg_.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T> p = params.entries()[k].second;
    auto w = p.data();
    const bool has = p.has_grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has ? static_cast<double>(std::as_const(p).grad()[i]) : 0.0;
      double x = static_cast<double>(w[i]);
      x -= decay * x;
      const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * g;
      const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      x -= cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
      w[i] = static_cast<T>(x);
    }
  }
}

template <typename T>
void Adam<T>::append_state(autodiff::Checkpoint& ckpt, const ParameterSet<T>& params) const {
  constexpr auto dtype = sizeof(T) == 4 ? autodiff::DType::F32 : autodiff::DType::F64;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, p] = params.entries()[k];
    ckpt.tensors.push_back({"adam.m/" + name, dtype, p.shape(), std::vector<double>(m_[k].begin(), m_[k].end())});
    ckpt.tensors.push_back({"adam.v/" + name, dtype, p.shape(), std::vector<double>(v_[k].begin(), v_[k].end())});
  }
}

template <typename T>
void Adam<T>::restore_state(const autodiff::Checkpoint& ckpt, const ParameterSet<T>& params, std::int64_t t) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, p] = params.entries()[k];
    const auto* m = ckpt.find("adam.m/" + name);
    const auto* v = ckpt.find("adam.v/" + name);
    if (m == nullptr || v == nullptr || m->values.size() != p.numel() || v->values.size() != p.numel()) {
      throw CompatibilityError("checkpoint optimizer state missing or mismatched for " + name);
    }
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m_[k][i] = static_cast<T>(m->values[i]);
      v_[k][i] = static_cast<T>(v->values[i]);
    }
  }
  t_ = t;
}

template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params.entries()) {
    if (!p.has_grad()) continue;
    for (T g : std::as_const(p).grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& entry : params.entries()) {
      Tensor<T> p = entry.second;
      if (!p.has_grad()) continue;
      for (T& g : p.grad()) g = static_cast<T>(static_cast<double>(g) * s);
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(ParameterSet<float>&, double);
template double clip_grad_norm<double>(ParameterSet<double>&, double);

}  // namespace polydeform::train
