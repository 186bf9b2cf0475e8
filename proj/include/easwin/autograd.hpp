// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "easwin/tensor.hpp"

namespace easwin {

/// One recorded value in a computation graph.
///
/// A node owns its forward value, an optional gradient accumulator, the
/// nodes it was computed from and the closure that pushes its gradient
/// into them. Leaves (parameters and constants) have no closure.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-allocated on first use.
  Tensor<T>& grad_buffer();
  void accumulate(const Tensor<T>& g);
};

/// Shared handle to a graph node. Copies alias the same node.
template <typename T>
class Variable {
 public:
  Variable() = default;
  explicit Variable(Tensor<T> value, bool requires_grad = false);
  explicit Variable(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(Index i) const { return node_->value.dim(i); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Accumulated gradient; empty tensor when nothing has flowed here yet.
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  bool defined() const { return static_cast<bool>(node_); }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Learnable tensor with a unique dotted name ("blocks.t0.attn.w_q").
template <typename T>
struct Parameter {
  std::string name;
  Variable<T> var;
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable node that requires them; intermediate gradients are released
/// once consumed.
template <typename T>
void backward(const Variable<T>& loss);

/// Whether ops record a graph on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Labels non-finite failures raised inside it with a layer name.
class NameScope {
 public:
  explicit NameScope(std::string name);
  ~NameScope();
  NameScope(const NameScope&) = delete;
  NameScope& operator=(const NameScope&) = delete;
};

/// Dotted path of the active NameScope stack, or "<root>".
std::string current_scope();

/// Per-thread multiply-add tally kept by matmul.
struct MacCounter {
  std::uint64_t total = 0;
  std::uint64_t attention_core = 0;  // QK^T and PV products only
  bool in_core = false;
  void reset() { total = attention_core = 0; }
};

MacCounter& mac_counter();

class AttentionCoreScope {
 public:
  AttentionCoreScope() : prev_(mac_counter().in_core) { mac_counter().in_core = true; }
  ~AttentionCoreScope() { mac_counter().in_core = prev_; }
  AttentionCoreScope(const AttentionCoreScope&) = delete;
  AttentionCoreScope& operator=(const AttentionCoreScope&) = delete;

 private:
  bool prev_;
};

namespace detail {

/// Wraps an op result into a node. Checks finiteness, and only records
/// parents and the closure when grad mode is on and a parent needs it.
template <typename T>
Variable<T> make_result(Tensor<T> value, const char* op,
                        std::vector<std::shared_ptr<Node<T>>> parents,
                        std::function<void(Node<T>&)> backward_fn);

}  // namespace detail

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Variable<float>;
extern template class Variable<double>;

}  // namespace easwin
