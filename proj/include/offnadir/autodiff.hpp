#pragma once
// Reverse-mode autodiff on rank-4 tensors. Graphs are built per forward pass;
// leaves (parameters, inputs) persist across passes and accumulate gradients
// until zeroed. backward() requires a scalar root.

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "offnadir/tensor.hpp"

namespace offnadir::nn {

template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> backprop;  // accumulates into parents' grads

  void ensure_grad() {
    if (!grad.same_shape(value)) {
      grad.resize(value.n(), value.c(), value.h(), value.w());
    }
  }
};

template <class S>
class Variable {
public:
  Variable() = default;
  explicit Variable(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Variable leaf(Tensor<S> value, bool requires_grad) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Variable(std::move(n));
  }

  static Variable constant(Tensor<S> value) { return leaf(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<S>& value() const { return node_->value; }
  Tensor<S>& mutable_value() { return node_->value; }
  Tensor<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  std::shared_ptr<Node<S>> node() const { return node_; }

  void zero_grad() {
    if (node_) {
      node_->ensure_grad();
      node_->grad.fill(S(0));
    }
  }

  // A gradient-isolated view: shares no graph history with this variable.
  Variable detach() const { return constant(node_->value); }

  S scalar() const {
    ON_CHECK(node_ && node_->value.numel() == 1, "scalar() on non-scalar variable");
    return node_->value.v[0];
  }

  // Reverse-mode sweep from a scalar root.
  void backward() const {
    ON_CHECK(node_ && node_->value.numel() == 1, "backward() needs a scalar root");
    // Topological order, iterative DFS.
    std::vector<Node<S>*> order;
    std::unordered_set<Node<S>*> seen;
    struct Frame {
      Node<S>* n;
      size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.n->parents.size()) {
        Node<S>* p = f.n->parents[f.next_parent++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad.v[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<S>* n = *it;
      if (n->backprop && n->requires_grad) n->backprop(*n);
    }
  }

private:
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

// Child node wiring: result requires grad iff any parent does.
template <class S>
std::shared_ptr<Node<S>> make_op(std::vector<std::shared_ptr<Node<S>>> parents) {
  auto n = std::make_shared<Node<S>>();
  for (auto& p : parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  n->parents = std::move(parents);
  return n;
}

template <class S>
inline void accum(Node<S>& parent, const Tensor<S>& delta) {
  parent.ensure_grad();
  for (size_t i = 0; i < delta.numel(); ++i) parent.grad.v[i] += delta.v[i];
}

}  // namespace detail

}  // namespace offnadir::nn
