// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "whisma/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace whisma {

namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

std::size_t num_elements(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool trainable) {
  std::vector<T> data(num_elements(shape), T(0));
  return from(std::move(shape), std::move(data), trainable);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> data, bool trainable) {
  if (num_elements(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->trainable = trainable;
  impl->requires_grad = trainable;
  return BasicTensor(std::move(impl));
}

template <typename T>
T BasicTensor<T>::item() const {
  if (size() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

template <typename T>
void BasicTensor<T>::set_trainable(bool trainable) {
  if (impl_->op != "leaf") throw Error("set_trainable: only leaf tensors can change trainability");
  impl_->trainable = trainable;
  impl_->requires_grad = trainable;
  if (!trainable) impl_->grad.clear();
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(shape()));
  }
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS; each node is emitted once.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> seen;
  std::vector<std::pair<Impl*, std::size_t>> stack{{impl_.get(), 0}};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Impl* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Intermediate gradients are not needed past this point.
  for (Impl* node : order) {
    if (node->op != "leaf") node->grad.clear();
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace whisma
