// Copyright 2026 The taskaug Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "taskaug/tensor.hpp"

namespace taskaug::ad {

enum class Op {
  Leaf,
  MatMul,
  Add,
  Mul,
  Relu,
  Sigmoid,
  Tanh,
  Exp,
  Affine,
  Conv2d,
  ConvTranspose2d,
  Upsample2x,
  Reshape,
  Slice,
  Sum,
  Mse,
  L2Sq,
  Render,
};

const char* op_name(Op op);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

struct Cotangent {
  Var node;
  Tensor grad;
};

/// Append-only tape. Node inputs always precede the node, so reverse id order
/// is a valid reverse topological order.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf holding a copy of `t`; gradients are tracked iff t.requires_grad().
  Var leaf(const Tensor& t);
  Var param(Tensor t) { return leaf(t.set_requires_grad(true)); }
  Var constant(Tensor t) { return leaf(t.set_requires_grad(false)); }

  /// Records an operation node. `fn` propagates the node's gradient to its
  /// inputs through accumulate_grad(); it is only invoked when some input
  /// needs a gradient.
  Var record(Op op, std::vector<int> inputs, Tensor value, BackwardFn fn);

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Tensor& value(Var v) const { return value(v.id); }
  Op op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  const std::vector<int>& inputs(int id) const {
    return nodes_.at(static_cast<std::size_t>(id)).inputs;
  }
  bool needs_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).needs_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Reverse pass from a scalar loss.
  void backward(Var loss);
  /// Reverse pass seeded with arbitrary cotangents, one per node.
  void backward(std::span<const Cotangent> seeds);
  /// Gradient accumulated at a node by the last reverse pass (zeros if the
  /// node was not reached).
  Tensor grad(Var v) const;

  /// Gradient buffer of a node during the reverse pass (allocated on demand).
  Tensor& grad_buffer(int id);
  const Tensor* grad_if_any(int id) const;

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    BackwardFn backward_fn;
  };

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

/// Continues a reverse pass from `node` as if it were a loss with cotangent
/// `grad`. Used to push gradients computed outside the tape (the MPC layer).
void inject_external_gradient(Graph& g, Var node, const Tensor& grad);

struct Conv2dAttrs {
  int stride = 1;
  int pad = 0;
  /// Padding after the last row/column; negative means equal to `pad`.
  int pad_end = -1;
};

/// [M,K] x [K,N] -> [M,N].
Var matmul(Var a, Var b);
/// Elementwise sum of equal shapes, or [.., N] + [N] bias add.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);
/// scale * x + shift with constant scale and shift.
Var affine(Var x, float scale, float shift = 0.0f);
/// x: [N,C,H,W], w: [O,C,KH,KW], bias: [O].
Var conv2d(Var x, Var w, std::optional<Var> bias, Conv2dAttrs attrs);
/// x: [N,C,H,W], w: [C,O,KH,KW] -> [N,O,(H-1)s-2p+KH,(W-1)s-2p+KW].
Var conv_transpose2d(Var x, Var w, std::optional<Var> bias, int stride, int pad);
/// Nearest-neighbour 2x upsampling of [N,C,H,W].
Var upsample2x(Var x);
Var reshape(Var x, Shape shape);
/// Half-open range [begin, end) along `axis`.
Var slice(Var x, int axis, int begin, int end);
Var sum(Var x);
/// Mean of squared differences.
Var mse(Var a, Var b);
/// Sum of squares.
Var l2sq(Var x);

}  // namespace taskaug::ad
