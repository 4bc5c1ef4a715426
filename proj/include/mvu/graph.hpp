#pragma once

#include "mvu/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace mvu {

// Reverse-mode autodiff tape over Tensor<S>. Nodes are created in topological
// order; backward() sweeps the tape in reverse. Ops are free functions in
// ops.hpp / nn.hpp. With grad disabled the tape stores values only, which is
// the cheap inference path.
template <typename S>
class Graph {
 public:
  using BackFn = std::function<void(Graph&, int)>;

  struct Node {
    Tensor<S> value;
    Tensor<S> grad;  // allocated on demand
    std::vector<int> parents;
    BackFn back;
  };

  bool grad_enabled = true;

  int emplace(Tensor<S> value, std::vector<int> parents, BackFn back) {
    Node n;
    n.value = std::move(value);
    if (grad_enabled) {
      n.parents = std::move(parents);
      n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int constant(Tensor<S> value) { return emplace(std::move(value), {}, nullptr); }
  int leaf(Tensor<S> value) { return emplace(std::move(value), {}, nullptr); }

  const Tensor<S>& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor<S>& val(int id) { return nodes_[static_cast<size_t>(id)].value; }

  Tensor<S>& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor<S>::zeros(n.value.shape);
    return n.grad;
  }

  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad.numel() != 0; }

  // Seeds d(root)/d(root) = 1 (root must be scalar) and sweeps the tape.
  void backward(int root) {
    if (!grad_enabled) throw std::logic_error("Graph::backward with grad disabled");
    if (val(root).numel() != 1) throw std::invalid_argument("backward root must be scalar");
    grad(root)[0] = S(1);
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.back && n.grad.numel() != 0) n.back(*this, id);
    }
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void reserve(size_t n) { nodes_.reserve(n); }

 private:
  std::vector<Node> nodes_;
};

// Canonical-order summation: sorting the addends makes the result independent
// of their original order, which the view-permutation invariants require.
template <typename S>
inline S sorted_sum(S* buf, int n) {
  std::sort(buf, buf + n);
  S acc = S(0);
  for (int i = 0; i < n; ++i) acc += buf[i];
  return acc;
}

}  // namespace mvu
