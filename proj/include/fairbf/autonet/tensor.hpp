#pragma once

// Reverse-mode autodiff over dense real tensors.
//
// A Tensor is a shared handle to a Node. Ops create a new Node that keeps
// its inputs alive and records a backward closure; backward() walks the
// recorded graph once in reverse topological order and then releases it.
// Leaves (parameters, inputs) keep their accumulated gradients.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <unordered_set>
#include <vector>

#include "fairbf/error.hpp"

namespace fairbf::autonet {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  bool is_leaf() const noexcept { return parents.empty() && !backward_fn; }

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->data.assign(numel_of(shape), T(0));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (data.size() != numel_of(shape))
      throw DimensionError(detail::concat("tensor: ", data.size(),
                                          " values for shape of ", numel_of(shape),
                                          " elements"));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{v}, requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }

  T item() const {
    if (numel() != 1)
      throw DimensionError(detail::concat("item() on tensor with ", numel(), " elements"));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  // Value copy of this tensor as a fresh leaf (no graph, no gradient).
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  // Result node for an op. Requires grad iff any input does.
  static Tensor make_result(Shape shape, std::initializer_list<Tensor> inputs) {
    Tensor out(std::move(shape));
    for (const auto& in : inputs) {
      if (in.requires_grad()) out.node_->requires_grad = true;
      out.node_->parents.push_back(in.node_);
    }
    return out;
  }

  void set_backward(std::function<void()> fn) {
    if (node_->requires_grad) node_->backward_fn = std::move(fn);
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Populates gradients of every node reachable from `loss` that requires
// one, then releases the graph. Throws on a non-scalar loss.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw DimensionError(detail::concat("backward() needs a scalar loss, got ",
                                        loss.numel(), " elements"));
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size() == n->data.size()) n->backward_fn();
  }
  for (Node<T>* n : order) {
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

}  // namespace fairbf::autonet
