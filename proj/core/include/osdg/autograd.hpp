// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode differentiation over coarse tensor operations. Each op
// node owns its forward value and a closure that pushes its gradient into the
// gradients of its inputs.

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "osdg/tensor.hpp"

namespace osdg::ag {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return Var(std::move(n));
  }
  static Var leaf(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

  /// Gradient accumulated by the last backward pass; zeros if none reached it.
  Tensor<T>& grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (node_->grad.size()) node_->grad.fill(T{0});
  }

  /// Same value, cut from the graph.
  Var detach() const { return constant(node_->value); }

  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Creates an op node. When no input requires a gradient the node is a
/// constant and `backward_fn` is dropped.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    for (auto& in : inputs) n->inputs.push_back(in.node_ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(n));
}

/// Seeds d(root)/d(root) = 1 (root must hold one element) and runs every
/// reachable backward closure in reverse topological order.
template <typename T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  // Intermediate gradients start from zero on every pass.
  for (Node<T>* n : order)
    if (n->backward_fn) n->grad = Tensor<T>();
  root.node()->grad_buffer()[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size()) n->backward_fn(*n);
  }
}

}  // namespace osdg::ag
