#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "artgest/core/tensor.hpp"

namespace artgest {

struct Node;
using Var = std::shared_ptr<Node>;

/// One vertex of the dynamic computation graph. `backward_fn` reads
/// this node's grad and accumulates into the parents' grads.
struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros(value.shape());
  }

  void zero_grad() {
    if (!grad.empty()) grad.fill(0.0f);
  }
};

inline thread_local bool g_grad_enabled = true;

/// Disables graph construction in scope (inference / metric passes).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
  ~NoGradGuard() { g_grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return g_grad_enabled; }

inline Var make_leaf(Tensor value, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

/// Builds a graph node for an op result. When grad mode is off or no parent
/// needs gradients the node is detached (no parents, no backward fn), so
/// inference builds no tape.
inline Var make_result(Tensor value, std::vector<Var> parents,
                       std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents)
      if (p && p->requires_grad) any = true;
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward_fn = std::move(backward_fn);
    }
  }
  return n;
}

/// Adds `delta` into the parent's grad if it participates in the graph.
inline void accumulate(const Var& parent, const Tensor& delta) {
  if (!parent || !parent->requires_grad) return;
  parent->ensure_grad();
  parent->grad.add_(delta);
}

namespace detail {
inline void topo_visit(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
  // Iterative post-order DFS: graphs can be deep (per-layer chains).
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack{{n, 0}};
  seen.insert(n);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}
}  // namespace detail

/// Reverse-mode sweep from `root`. Seeds the root grad with ones unless a
/// grad tensor is supplied. Parents receive accumulated (fan-out summed)
/// gradients in reverse topological order.
inline void backward(const Var& root, const Tensor* seed = nullptr) {
  require(root != nullptr, ErrorCode::InvalidArgument, "backward on null var");
  if (!root->requires_grad) return;
  root->ensure_grad();
  if (seed) {
    require(seed->same_shape(root->value), ErrorCode::ShapeMismatch, "backward seed shape");
    root->grad.add_(*seed);
  } else {
    for (auto& v : root->grad) v += 1.0f;
  }

  std::unordered_set<Node*> seen;
  std::vector<Node*> order;
  detail::topo_visit(root.get(), seen, order);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

}  // namespace artgest
