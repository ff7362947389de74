#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "polydeform/autodiff/tensor.hpp"
#include "polydeform/error.hpp"

namespace polydeform::autodiff {

/// Ordered, named collection of learnable tensors. Registration order is the
/// canonical order for checkpoints, optimizers and hashing.
template <typename T>
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  /// Registers a tensor (marked as requiring gradients) and returns a handle
  /// sharing its storage.
  Tensor<T> add(std::string name, Tensor<T> tensor) {
    if (find(name) != nullptr) throw ContractError("duplicate parameter name: " + name);
    tensor.set_requires_grad(true);
    entries_.emplace_back(std::move(name), tensor);
    return tensor;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
      if (n == name) return &t;
    }
    return nullptr;
  }

  Tensor<T> get(const std::string& name) const {
    const auto* t = find(name);
    if (t == nullptr) throw ContractError("unknown parameter: " + name);
    return *t;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t total_numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  /// Copies values from another set with identical names and shapes.
  template <typename U>
  void copy_values_from(const ParameterSet<U>& other) {
    if (other.size() != size()) throw CompatibilityError("parameter count mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& [name, src] = other.entries()[i];
      auto& dst = entries_[i].second;
      if (name != entries_[i].first || src.shape() != dst.shape()) {
        throw CompatibilityError("parameter mismatch at " + entries_[i].first);
      }
      auto d = dst.data();
      auto s = src.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<T>(s[k]);
    }
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace polydeform::autodiff
