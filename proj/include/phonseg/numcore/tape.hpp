// Copyright 2026 The phonseg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <unordered_map>

#include "phonseg/numcore/matrix.hpp"

namespace phonseg::num {

struct Parameter;
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

/// Records a computation DAG in creation order. Creation order is a
/// topological order, so backward() walks the nodes in reverse and visits
/// each node once. Gradients reaching a param() leaf are added to the
/// corresponding Parameter::grad.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  /// With grad disabled no backward closures are stored (inference mode).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  /// Leaf bound to a trainable parameter; repeated calls return the same node.
  Var param(Parameter& p);

  /// Records an op result. `requires_grad` should be true iff any parent
  /// requires grad; `op` names the op in error messages.
  Var emit(const char* op, Matrix value, bool requires_grad, BackwardFn fn);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }
  bool requires_grad(Var v) const {
    return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
  }
  bool has_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].has_grad; }
  /// Accumulated gradient; zeros of the value's shape if none reached it.
  Matrix grad(Var v) const;

  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id())];
    if (!n.requires_grad) return;
    if (n.has_grad) {
      n.grad += g;
    } else {
      n.grad = g;
      n.has_grad = true;
    }
  }

  /// Adds g into the block of v's gradient starting at (row, col).
  void accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id())];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    n.grad.block(row, col, g.rows(), g.cols()) += g;
  }

  /// Backward from a 1x1 root seeded with 1.
  void backward(Var root);
  void backward(Var root, const Matrix& seed);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, std::int32_t> param_nodes_;
  bool grad_enabled_;
};

}  // namespace phonseg::num
