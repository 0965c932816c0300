// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace whisma {

using Shape = std::vector<std::size_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

std::size_t num_elements(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool trainable = false;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor with reverse-mode differentiation.
///
/// Copies share the underlying storage; graph nodes keep their inputs alive
/// until the output is released. Only leaves marked trainable accumulate
/// gradient, and intermediate nodes record a backward closure only when some
/// input requires gradient, so frozen subgraphs never allocate.
template <typename T>
class BasicTensor {
 public:
  using Impl = detail::TensorImpl<T>;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static BasicTensor zeros(Shape shape, bool trainable = false);
  static BasicTensor from(Shape shape, std::vector<T> data, bool trainable = false);
  static BasicTensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t rows() const { return impl_->shape.at(0); }
  std::size_t cols() const { return impl_->shape.size() > 1 ? impl_->shape[1] : 1; }

  std::span<const T> data() const { return impl_->data; }
  /// Direct write access; reserved for initialization, checkpoint loading
  /// and optimizer updates on leaves.
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;
  T at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  bool trainable() const { return impl_->trainable; }
  void set_trainable(bool trainable);
  bool requires_grad() const { return impl_->requires_grad; }
  const std::string& op() const { return impl_->op; }

  /// A leaf copy of the values, detached from any graph.
  BasicTensor detach() const { return from(shape(), impl_->data); }

  /// Populates gradients of every trainable leaf reachable from this scalar.
  void backward() const;

  Impl* impl() const { return impl_.get(); }
  const std::shared_ptr<Impl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;

/// Whether ops record backward closures on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
using Tensor64 = BasicTensor<double>;

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace whisma
