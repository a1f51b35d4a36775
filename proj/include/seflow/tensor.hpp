#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "seflow/errors.hpp"

namespace seflow {

/// Rank-3 extent: (batch, channels, time). Weight tensors reuse the same rank
/// with the convention (out_channels, in_channels, kernel).
struct Shape {
  int batch = 0;
  int channels = 0;
  int time = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(batch) * static_cast<std::size_t>(channels) *
           static_cast<std::size_t>(time);
  }
  bool operator==(const Shape&) const = default;
  std::string str() const { return detail::strfmt("(%d,%d,%d)", batch, channels, time); }
};

namespace autograd {

bool enabled();

/// Suspends graph recording on this thread while alive. Results produced under
/// the guard carry no tape and cannot be backpropagated through.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

}  // namespace autograd

namespace detail {

template <class S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), S(0));
  }
};

}  // namespace detail

/// Rank-3 tensor with optional reverse-mode gradient storage. Handles share
/// the underlying buffer; values are treated as immutable once an op has
/// produced them. Leaf tensors (parameters, inputs) may be mutated through
/// mutable_values() between training steps.
template <class S>
class Tensor {
 public:
  using Node = detail::TensorNode<S>;

  Tensor() = default;

  static Tensor zeros(Shape sh, bool requires_grad = false) {
    return from_vector(sh, std::vector<S>(sh.numel(), S(0)), requires_grad);
  }
  static Tensor full(Shape sh, S v, bool requires_grad = false) {
    return from_vector(sh, std::vector<S>(sh.numel(), v), requires_grad);
  }
  static Tensor from_vector(Shape sh, std::vector<S> data, bool requires_grad = false) {
    if (data.size() != sh.numel())
      throw DataError(detail::strfmt("tensor data length %zu does not match shape %s", data.size(),
                                     sh.str().c_str()));
    auto n = std::make_shared<Node>();
    n->shape = sh;
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }
  static Tensor scalar(S v, bool requires_grad = false) {
    return from_vector(Shape{1, 1, 1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return check().shape; }
  std::size_t numel() const { return check().value.size(); }

  const S* data() const { return check().value.data(); }
  const std::vector<S>& values() const { return check().value; }

  /// Leaf-only mutable access (optimizer updates, parameter loading).
  std::vector<S>& mutable_values() {
    Node& n = check();
    if (!n.leaf) throw Error("only leaf tensors may be mutated in place");
    return n.value;
  }

  S item() const {
    const Node& n = check();
    if (n.value.size() != 1)
      throw Error(detail::strfmt("item() on non-scalar tensor of shape %s", n.shape.str().c_str()));
    return n.value[0];
  }

  bool requires_grad() const { return check().requires_grad; }
  void set_requires_grad(bool rg) {
    Node& n = check();
    if (!n.leaf) throw Error("requires_grad can only be toggled on leaf tensors");
    n.requires_grad = rg;
  }
  bool is_leaf() const { return check().leaf; }

  bool has_grad() const { return defined() && !node_->grad.empty(); }
  const std::vector<S>& grad() const {
    const Node& n = check();
    if (n.grad.empty()) throw Error("tensor has no gradient; call backward() first");
    return n.grad;
  }
  void ensure_grad() { check().ensure_grad(); }
  void zero_grad() {
    Node& n = check();
    std::fill(n.grad.begin(), n.grad.end(), S(0));
  }

  /// Reverse-mode sweep from a scalar loss. Frees the tape afterwards, so a
  /// second call on the same graph is rejected.
  void backward();

  /// Value copy with no tape attached.
  Tensor detached() const {
    const Node& n = check();
    return from_vector(n.shape, n.value, false);
  }

  bool all_finite() const {
    for (S v : check().value)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  /// Builds an op output node. Records the tape only when autograd is enabled
  /// and some parent requires a gradient.
  static Tensor make_op(Shape sh, std::vector<S> value, std::vector<Tensor> parents,
                        std::function<void(Node&)> backward_fn) {
    Tensor out = from_vector(sh, std::move(value), false);
    bool record = autograd::enabled();
    if (record) {
      record = false;
      for (const auto& p : parents)
        if (p.defined() && p.requires_grad()) record = true;
    }
    if (record) {
      Node& n = *out.node_;
      n.requires_grad = true;
      n.leaf = false;
      n.parents.reserve(parents.size());
      for (auto& p : parents)
        if (p.defined()) n.parents.push_back(p.node_);
      n.backward_fn = std::move(backward_fn);
    }
    return out;
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  Node& check() {
    if (!node_) throw Error("use of undefined tensor");
    return *node_;
  }
  const Node& check() const {
    if (!node_) throw Error("use of undefined tensor");
    return *node_;
  }

  std::shared_ptr<Node> node_;
};

template <class S>
void Tensor<S>::backward() {
  Node& root = check();
  if (root.value.size() != 1)
    throw Error(detail::strfmt("backward() requires a scalar loss, got shape %s",
                               root.shape.str().c_str()));
  if (!root.requires_grad || (root.leaf && !root.backward_fn))
    throw Error("backward() on a tensor with no recorded graph");

  // Iterative post-order DFS over the tape; reversed, it is a topological
  // order. Strong references keep every visited node alive through the whole
  // sweep: releasing a node's parent list below may otherwise destroy
  // intermediates that are still queued.
  std::vector<std::shared_ptr<Node>> order;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  std::unordered_set<Node*> mark;
  stack.emplace_back(node_, 0);
  mark.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      std::shared_ptr<Node> p = n->parents[idx];
      ++idx;
      if (p && p->requires_grad && !mark.count(p.get())) {
        mark.insert(p.get());
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.ensure_grad();
  root.grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = it->get();
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    // Release the tape as we go; values stay alive through user handles.
    n->backward_fn = nullptr;
    n->parents.clear();
    if (!n->leaf) n->requires_grad = false;
  }
}

}  // namespace seflow
