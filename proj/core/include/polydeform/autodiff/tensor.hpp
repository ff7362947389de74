#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "polydeform/autodiff/aligned.hpp"

namespace polydeform::autodiff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor with an optional gradient buffer. Copies share the
/// underlying storage (handle semantics); use clone() for a deep copy.
///
/// Instantiated for float (training/inference) and double (gradient checks).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->value.size(); }

  std::span<T> data() { return impl_->value; }
  std::span<const T> data() const { return impl_->value; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access.
  std::span<T> grad();
  /// Empty span when no gradient has been accumulated.
  std::span<const T> grad() const { return impl_->grad; }
  void zero_grad();
  void drop_grad() { impl_->grad.clear(); }

  /// Deep copy of values (and gradient, if any).
  Tensor clone() const;
  /// Deep copy of values only, never tracking gradients.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Storage {
    Shape shape;
    Buffer<T> value;
    Buffer<T> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Storage> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<Storage> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace polydeform::autodiff
