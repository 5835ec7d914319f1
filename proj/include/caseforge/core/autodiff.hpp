#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "caseforge/core/tensor.hpp"

namespace caseforge {

// Reverse-mode autodiff over a dynamic graph. Nodes are created per forward
// pass and freed when the root goes out of scope; parameters are long-lived
// leaf nodes owned by the modules. Creation order is a valid topological
// order, so backward() just replays reachable nodes by descending sequence.

namespace detail {
inline std::atomic<uint64_t>& node_seq_counter() {
  static std::atomic<uint64_t> c{0};
  return c;
}
inline bool& grad_mode() {
  static thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph construction on this thread for the guard's lifetime;
// forwards built under it behave as detached constants.
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first use
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;
  bool requires_grad = false;
  uint64_t seq = 0;

  Tensor<T>& ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<T>::zeros(value.shape());
    return grad;
  }
  // Releases the buffer entirely: a parameter with no allocated grad was not
  // part of the last backward pass and optimizers must leave it untouched.
  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->seq = detail::node_seq_counter().fetch_add(1, std::memory_order_relaxed);
  return n;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  return make_leaf(std::move(value), false);
}

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents,
                 std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (detail::grad_mode()) {
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
      if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  }
  n->seq = detail::node_seq_counter().fetch_add(1, std::memory_order_relaxed);
  return n;
}

// Stop-gradient: copies the value into a fresh constant leaf.
template <typename T>
Var<T> detach(const Var<T>& v) {
  return constant(Tensor<T>(v->value));
}

template <typename T>
void backward(const Var<T>& root) {
  require(root->value.numel() == 1, Errc::invalid_argument,
          "backward: root must be a scalar");
  if (!root->requires_grad) return;
  // Collect reachable grad-requiring nodes.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->seq > b->seq; });
  root->ensure_grad().fill(T(1));
  for (Node<T>* n : order) {
    if (n->backward_fn && n->grad.numel()) n->backward_fn(*n);
  }
}

}  // namespace caseforge
