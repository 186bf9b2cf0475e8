// SPDX-License-Identifier: Apache-2.0
#include "easwin/autograd.hpp"

#include <unordered_set>

namespace easwin {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::vector<std::string> t_scopes;
thread_local MacCounter t_macs;

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

NameScope::NameScope(std::string name) { t_scopes.push_back(std::move(name)); }
NameScope::~NameScope() { t_scopes.pop_back(); }

std::string current_scope() {
  if (t_scopes.empty()) return "<root>";
  std::string out;
  for (const auto& s : t_scopes) {
    if (!out.empty()) out += '.';
    out += s;
  }
  return out;
}

MacCounter& mac_counter() { return t_macs; }

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (g.shape() != value.shape()) {
    throw DimensionError(std::string("gradient shape ") + shape_str(g.shape()) +
                         " does not match value shape " + shape_str(value.shape()) +
                         " at op " + op);
  }
  if (grad.empty()) {
    grad = g;
    return;
  }
  T* dst = grad.data();
  const T* src = g.data();
  for (Index i = 0, n = g.size(); i < n; ++i) dst[i] += src[i];
}

template <typename T>
Variable<T>::Variable(Tensor<T> value, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
void backward(const Variable<T>& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined variable");
  if (loss.value().size() != 1 || loss.value().ndim() > 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a valid reverse-topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Tensor<T>(loss.shape(), T(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->backward) continue;
    if (node->grad.empty()) continue;
    node->backward(*node);
    node->grad = Tensor<T>();
  }
}

namespace detail {

template <typename T>
Variable<T> make_result(Tensor<T> value, const char* op,
                        std::vector<std::shared_ptr<Node<T>>> parents,
                        std::function<void(Node<T>&)> backward_fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op + " in " +
                       current_scope());
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Variable<T>(std::move(node));
}

template Variable<float> make_result(Tensor<float>, const char*,
                                     std::vector<std::shared_ptr<Node<float>>>,
                                     std::function<void(Node<float>&)>);
template Variable<double> make_result(Tensor<double>, const char*,
                                      std::vector<std::shared_ptr<Node<double>>>,
                                      std::function<void(Node<double>&)>);

}  // namespace detail

template struct Node<float>;
template struct Node<double>;
template class Variable<float>;
template class Variable<double>;
template void backward(const Variable<float>&);
template void backward(const Variable<double>&);

}  // namespace easwin
