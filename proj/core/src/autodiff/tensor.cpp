#include "polydeform/autodiff/tensor.hpp"

#include <algorithm>

#include "polydeform/error.hpp"

namespace polydeform::autodiff {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto s = std::make_shared<Storage>();
  s->value.assign(shape_numel(shape), value);
  s->shape = std::move(shape);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  }
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->value.assign(data.begin(), data.end());
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not scalar");
  return impl_->value[0];
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), T{0});
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto s = std::make_shared<Storage>(*impl_);
  return Tensor(std::move(s));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto s = std::make_shared<Storage>();
  s->shape = impl_->shape;
  s->value = impl_->value;
  return Tensor(std::move(s));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace polydeform::autodiff
