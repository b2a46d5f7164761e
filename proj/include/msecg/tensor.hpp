// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <msecg/errors.hpp>

namespace msecg {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

/// Dense row-major tensor. Rank 0 (empty shape) is a scalar of size 1.
/// Gradient storage is allocated lazily the first time a tape op touches it.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;

  std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  void zero_grad() { grad.assign(value.size(), T(0)); }

  // Scalar access; requires size()==1.
  T item() const {
    if (value.size() != 1)
      throw ContractError("item() on tensor of size " +
                          std::to_string(value.size()));
    return value[0];
  }

  static std::shared_ptr<Tensor<T>> zeros(Shape shape, bool requires_grad = false);
  static std::shared_ptr<Tensor<T>> full(Shape shape, T fill,
                                         bool requires_grad = false);
  static std::shared_ptr<Tensor<T>> from(Shape shape, std::vector<T> data,
                                         bool requires_grad = false);
  static std::shared_ptr<Tensor<T>> scalar(T v, bool requires_grad = false);
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

// Throws NonFiniteError naming `op` if any element of `t` is NaN or Inf.
template <typename T>
void check_finite(const Tensor<T>& t, const char* op);

/// Reverse-mode tape. Ops append backward closures while an instance is the
/// thread-current tape; backward() replays them last-to-first. Fan-out grads
/// accumulate additively, so zero_grad() before reusing leaf tensors.
template <typename T>
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape<T>* current() { return current_; }

  void record(std::function<void()> backward_op) {
    ops_.push_back(std::move(backward_op));
  }

  // Seeds d(loss)/d(loss)=1 and replays the tape. `loss` must be a scalar
  // (size-1) tensor with requires_grad, else ContractError.
  void backward(const TensorPtr<T>& loss);

  std::size_t op_count() const { return ops_.size(); }

 private:
  static thread_local Tape<T>* current_;
  Tape<T>* prev_ = nullptr;
  std::vector<std::function<void()>> ops_;
};

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template void check_finite<float>(const Tensor<float>&, const char*);
extern template void check_finite<double>(const Tensor<double>&, const char*);

}  // namespace msecg
