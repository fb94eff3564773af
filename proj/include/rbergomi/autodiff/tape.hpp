#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "rbergomi/errors.hpp"
#include "rbergomi/numerics/linalg.hpp"

namespace rbergomi::ad {

class Tape;

/// A matrix value, optionally recorded on a tape. Untracked values
/// (tape == nullptr) behave as constants: operations on them only compute
/// forward values and record nothing.
class Var {
 public:
  Var() = default;
  explicit Var(Matrix value) : value_(std::make_shared<const Matrix>(std::move(value))) {}
  explicit Var(double scalar) : Var(Matrix::Constant(1, 1, scalar)) {}

  const Matrix& value() const { return *value_; }
  double scalar() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("Var::scalar: value is not 1x1");
    return (*value_)(0, 0);
  }
  Eigen::Index rows() const { return value_ ? value_->rows() : 0; }
  Eigen::Index cols() const { return value_ ? value_->cols() : 0; }
  bool tracked() const { return tape_ != nullptr; }
  bool empty() const { return !value_; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  std::shared_ptr<const Matrix> value_;
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Gradients of one backward pass, indexed by node.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix> g) : g_(std::move(g)) {}

  /// Gradient with respect to `v`; exact zeros if `v` was not reached.
  Matrix wrt(const Var& v) const {
    if (v.tracked() && v.id() >= 0 && static_cast<std::size_t>(v.id()) < g_.size() &&
        g_[v.id()].size() > 0)
      return g_[v.id()];
    return Matrix::Zero(v.rows(), v.cols());
  }

 private:
  std::vector<Matrix> g_;
};

/// Vector-Jacobian product of one node: receives the gradient of the node
/// output and fills one entry per parent (left empty means zero).
using Backward = std::function<void(const Matrix& grad, std::vector<Matrix>& parent_grads)>;

/// Append-only record of operations. Insertion order is a topological
/// order, so backward is a single reverse sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New root variable (a parameter or input to differentiate against).
  Var variable(Matrix value) {
    Var v(std::move(value));
    v.tape_ = this;
    v.id_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{{}, nullptr, v.rows(), v.cols()});
    return v;
  }
  Var variable(double scalar) { return variable(Matrix::Constant(1, 1, scalar)); }

  /// Records the result of an operation. If no parent is tracked the
  /// result is returned as a constant and nothing is recorded.
  static Var record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    return record(std::move(value), std::vector<Var>(parents), std::move(backward));
  }

  static Var record(Matrix value, const std::vector<Var>& parents, Backward backward) {
    Tape* tape = nullptr;
    for (const Var& p : parents) {
      if (!p.tracked()) continue;
      if (tape && tape != p.tape()) throw ShapeError("Tape::record: operands live on different tapes");
      tape = p.tape();
    }
    Var out(std::move(value));
    if (!tape) return out;
    Node node{{}, std::move(backward), out.rows(), out.cols()};
    node.parents.reserve(parents.size());
    for (const Var& p : parents) node.parents.push_back(p.tracked() ? p.id() : -1);
    out.tape_ = tape;
    out.id_ = static_cast<int>(tape->nodes_.size());
    tape->nodes_.push_back(std::move(node));
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Number of backward closures invoked by the most recent backward().
  std::size_t backward_ops() const { return backward_ops_; }

  /// Reverse sweep from a 1x1 `loss`. The tape is not modified, so calling
  /// this twice gives identical results.
  Gradients backward(const Var& loss) const {
    if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward: loss must be 1x1");
    std::vector<Matrix> grads(nodes_.size());
    backward_ops_ = 0;
    if (!loss.tracked()) return Gradients(std::move(grads));
    if (loss.tape() != this) throw ShapeError("backward: loss recorded on another tape");
    grads[loss.id()] = Matrix::Ones(1, 1);
    std::vector<Matrix> parent_grads;
    for (int i = loss.id(); i >= 0; --i) {
      const Node& node = nodes_[i];
      if (grads[i].size() == 0 || !node.backward) continue;
      parent_grads.assign(node.parents.size(), Matrix());
      node.backward(grads[i], parent_grads);
      ++backward_ops_;
      for (std::size_t k = 0; k < node.parents.size(); ++k) {
        const int p = node.parents[k];
        if (p < 0 || parent_grads[k].size() == 0) continue;
        const Node& parent = nodes_[p];
        if (parent_grads[k].rows() != parent.rows || parent_grads[k].cols() != parent.cols)
          throw ShapeError("backward: gradient shape mismatch at node " + std::to_string(i));
        if (grads[p].size() == 0)
          grads[p] = std::move(parent_grads[k]);
        else
          grads[p] += parent_grads[k];
      }
    }
    return Gradients(std::move(grads));
  }

 private:
  struct Node {
    std::vector<int> parents;
    Backward backward;
    Eigen::Index rows;
    Eigen::Index cols;
  };
  std::vector<Node> nodes_;
  mutable std::size_t backward_ops_ = 0;
};

}  // namespace rbergomi::ad
