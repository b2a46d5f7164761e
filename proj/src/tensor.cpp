// SPDX-License-Identifier: Apache-2.0
#include <msecg/tensor.hpp>

#include <cmath>
#include <sstream>

namespace msecg {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
TensorPtr<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  t->value.assign(shape_size(t->shape), T(0));
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
TensorPtr<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  t->value.assign(shape_size(t->shape), fill);
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
TensorPtr<T> Tensor<T>::from(Shape shape, std::vector<T> data,
                             bool requires_grad) {
  if (shape_size(shape) != static_cast<std::int64_t>(data.size()))
    throw DimensionError("from: shape " + shape_str(shape) + " wants " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(data.size()));
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  t->value = std::move(data);
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
TensorPtr<T> Tensor<T>::scalar(T v, bool requires_grad) {
  return from({}, {v}, requires_grad);
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (const T v : t.value)
    if (!std::isfinite(v))
      throw NonFiniteError(std::string(op) + " produced a non-finite value");
}

template <typename T>
thread_local Tape<T>* Tape<T>::current_ = nullptr;

template <typename T>
Tape<T>::Tape() : prev_(current_) {
  current_ = this;
}

template <typename T>
Tape<T>::~Tape() {
  current_ = prev_;
}

template <typename T>
void Tape<T>::backward(const TensorPtr<T>& loss) {
  if (!loss || loss->size() != 1)
    throw ContractError("backward needs a scalar loss");
  if (!loss->requires_grad)
    throw ContractError("backward on a loss that requires no grad");
  loss->ensure_grad();
  loss->grad[0] = T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

template struct Tensor<float>;
template struct Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void check_finite<float>(const Tensor<float>&, const char*);
template void check_finite<double>(const Tensor<double>&, const char*);

}  // namespace msecg
