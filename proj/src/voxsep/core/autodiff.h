#pragma once

// Define-by-run reverse-mode tape. A Tape owns all nodes created during one
// forward build; creation order is a topological order, so backward is a
// single reverse sweep. Frozen inputs are ordinary constants
// (requires_grad=false); no graph surgery exists. One backward per tape.

#include <deque>
#include <functional>
#include <vector>

#include "voxsep/common.h"
#include "voxsep/core/tensor.h"

namespace voxsep::autodiff {

template <typename T>
class Tape;

template <typename T>
struct Node {
  Tensor<T> data;
  Tensor<T> grad;  // allocated during backward for reachable grad-requiring nodes
  bool requires_grad = false;
  std::vector<Node*> parents;
  std::function<void(Node&)> backward;  // accumulates into parents' grads
  std::int64_t idx = -1;
  Tape<T>* tape = nullptr;
};

template <typename T>
class Value {
 public:
  Value() = default;
  explicit Value(Node<T>* n) : node_(n) {}

  bool valid() const { return node_ != nullptr; }
  Node<T>* node() const { return node_; }
  const Tensor<T>& data() const { return node_->data; }
  const Tensor<T>& grad() const {
    VX_CHECK(!node_->grad.empty(), "gradient not computed for this value");
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<std::int64_t>& shape() const { return node_->data.shape(); }
  std::int64_t numel() const { return node_->data.numel(); }
  Tape<T>* tape() const { return node_->tape; }

 private:
  Node<T>* node_ = nullptr;
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value<T> leaf(Tensor<T> data, bool requires_grad) {
    Node<T>& n = nodes_.emplace_back();
    n.data = std::move(data);
    n.requires_grad = requires_grad;
    n.idx = static_cast<std::int64_t>(nodes_.size()) - 1;
    n.tape = this;
    return Value<T>(&n);
  }

  Value<T> constant(Tensor<T> data) { return leaf(std::move(data), false); }

  // requires_grad is inherited from parents; the closure is dropped when no
  // parent needs gradients, so inference builds carry no backward state.
  Value<T> make(Tensor<T> data, std::vector<Node<T>*> parents, std::function<void(Node<T>&)> bwd) {
    Node<T>& n = nodes_.emplace_back();
    n.data = std::move(data);
    for (Node<T>* p : parents) {
      if (p->requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    n.idx = static_cast<std::int64_t>(nodes_.size()) - 1;
    n.tape = this;
    if (n.requires_grad) {
      n.parents = std::move(parents);
      n.backward = std::move(bwd);
    }
    return Value<T>(&n);
  }

  void backward(Value<T> root) {
    VX_CHECK(!consumed_, "backward already ran on this tape");
    VX_CHECK(root.numel() == 1, "backward requires a scalar root");
    VX_CHECK(root.requires_grad(), "root does not depend on any gradient-requiring leaf");
    consumed_ = true;

    const std::int64_t top = root.node()->idx;
    std::vector<char> marked(static_cast<std::size_t>(top) + 1, 0);
    std::vector<Node<T>*> stack = {root.node()};
    marked[static_cast<std::size_t>(top)] = 1;
    while (!stack.empty()) {
      Node<T>* n = stack.back();
      stack.pop_back();
      for (Node<T>* p : n->parents) {
        if (p->requires_grad && !marked[static_cast<std::size_t>(p->idx)]) {
          marked[static_cast<std::size_t>(p->idx)] = 1;
          stack.push_back(p);
        }
      }
    }

    for (std::int64_t i = 0; i <= top; ++i) {
      if (marked[static_cast<std::size_t>(i)]) nodes_[static_cast<std::size_t>(i)].grad = Tensor<T>(nodes_[static_cast<std::size_t>(i)].data.shape());
    }
    root.node()->grad.fill(T(1));

    for (std::int64_t i = top; i >= 0; --i) {
      Node<T>& n = nodes_[static_cast<std::size_t>(i)];
      if (marked[static_cast<std::size_t>(i)] && n.backward) n.backward(n);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node<T>> nodes_;  // deque: stable addresses as the tape grows
  bool consumed_ = false;
};

}  // namespace voxsep::autodiff
