#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tcp/tensor.hpp"

namespace tcp {

// A named learnable array. `decay` controls whether weight decay applies
// (off for biases and normalization affine terms).
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  bool trainable = true;
  bool decay = true;

  Index size() const { return value.size(); }
  bool empty() const { return value.size() == 0; }
};

template <typename T>
class Tape;

// Handle to a value recorded on a tape. Cheap to copy; only valid while the
// owning tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape<T>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
// recording order is a topological order and backward() replays it in
// reverse. Node storage is a deque: references to values stay valid while
// new nodes are recorded.
template <typename T>
class Tape {
 public:
  // Receives the upstream gradient and this node's own output value.
  using Backward = std::function<void(Tape&, const Matrix<T>& grad, const Matrix<T>& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, {}); }

  // Tracked input that is not a Parameter (e.g. a perturbable input frame).
  Var<T> leaf(Matrix<T> value) { return push(std::move(value), true, {}); }

  // Leaf bound to a parameter; repeated calls return the same node.
  Var<T> param(const Parameter<T>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return Var<T>(this, it->second);
    Var<T> v = push(p.value, p.trainable, {});
    bound_.emplace(&p, v.id());
    return v;
  }

  Var<T> record(Matrix<T> value, std::initializer_list<Var<T>> inputs, Backward fn) {
    return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }

  Var<T> record(Matrix<T> value, std::span<const Var<T>> inputs, Backward fn) {
    bool needs = false;
    for (const auto& in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  const Matrix<T>& value(const Var<T>& v) const {
    check_owner(v);
    return nodes_[v.id()].value;
  }

  bool requires_grad(const Var<T>& v) const { return nodes_[v.id()].requires_grad; }

  template <typename Derived>
  void accumulate(const Var<T>& v, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and replays in reverse order.
  void backward(const Var<T>& root) {
    check_owner(root);
    if (root.rows() != 1 || root.cols() != 1) {
      throw DimensionError("backward needs a scalar root, got " +
                           shape_string(root.rows(), root.cols()));
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[root.id()].grad = Matrix<T>::Ones(1, 1);
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad, n.value);
    }
  }

  // Gradient of the last backward() root; zeros when the value was unused.
  Matrix<T> grad(const Var<T>& v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) return Matrix<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Matrix<T> grad(const Parameter<T>& p) const {
    auto it = bound_.find(&p);
    if (it == bound_.end()) return Matrix<T>::Zero(p.value.rows(), p.value.cols());
    return grad(Var<T>(const_cast<Tape*>(this), it->second));
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var<T> push(Matrix<T> value, bool requires_grad, Backward fn) {
    nodes_.push_back(Node{std::move(value), Matrix<T>(), requires_grad, std::move(fn)});
    return Var<T>(this, static_cast<int>(nodes_.size() - 1));
  }

  void check_owner(const Var<T>& v) const {
    if (v.valid() && &v.tape() == this) return;
    throw IntegrityError("value belongs to a different tape");
  }

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> bound_;
};

}  // namespace tcp
