#include "polydeform/autodiff/graph.hpp"

#include <cmath>

#include "polydeform/error.hpp"

namespace polydeform::autodiff {

template <typename T>
bool Graph<T>::tracks(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!options_.grad_enabled) return false;
  for (const auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
bool Graph<T>::tracks(const std::vector<Tensor<T>>& inputs) const {
  if (!options_.grad_enabled) return false;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

template <typename T>
void Graph<T>::record(std::string_view op, std::function<void()> backward) {
  if (consumed_) throw StaleGraphError("graph already consumed by backward(); call reset()");
  nodes_.push_back(std::move(backward));
  names_.emplace_back(op);
}

template <typename T>
void Graph<T>::backward(Tensor<T>& loss) {
  if (consumed_) {
    throw StaleGraphError("backward() called twice on the same graph without reset()");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  consumed_ = true;
  if (!loss.requires_grad()) {
    nodes_.clear();
    return;
  }
  loss.grad()[0] += T{1};
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  // Release saved activations.
  nodes_.clear();
}

template <typename T>
void Graph<T>::reset() {
  nodes_.clear();
  names_.clear();
  consumed_ = false;
}

template <typename T>
void Graph<T>::verify_finite(std::string_view op, const Tensor<T>& t) const {
  if (!options_.check_finite) return;
  for (T v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string(op) + ": non-finite value in output of shape " +
                           shape_string(t.shape()));
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace polydeform::autodiff
