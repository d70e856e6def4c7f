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

#include "taskaug/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "taskaug/error.hpp"

namespace taskaug::ad {

namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void add_into(Tensor& dst, const Tensor& src) {
  float* d = dst.ptr();
  const float* s = src.ptr();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

// Output columns [lo, hi) whose input column ow*stride + off lies inside [0, W).
inline void valid_range(int OW, int W, int stride, int off, int& lo, int& hi) {
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = W - 1 - off < 0 ? 0 : std::min(OW, (W - 1 - off) / stride + 1);
  if (hi < lo) hi = lo;
}

// im2col for one sample: col is [C*KH*KW, OH*OW].
void im2col(const float* x, int C, int H, int W, int KH, int KW, int stride, int pad, int OH,
            int OW, float* col) {
  const int ohw = OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int kh = 0; kh < KH; ++kh) {
      for (int kw = 0; kw < KW; ++kw) {
        float* row = col + static_cast<std::ptrdiff_t>(((c * KH + kh) * KW + kw)) * ohw;
        const int off = kw - pad;
        int lo, hi;
        valid_range(OW, W, stride, off, lo, hi);
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride + kh - pad;
          float* out = row + oh * OW;
          if (ih < 0 || ih >= H) {
            std::fill(out, out + OW, 0.0f);
            continue;
          }
          const float* xin = x + (static_cast<std::ptrdiff_t>(c) * H + ih) * W + off;
          std::fill(out, out + lo, 0.0f);
          if (stride == 1) {
            std::copy(xin + lo, xin + hi, out + lo);
          } else {
            for (int ow = lo; ow < hi; ++ow) out[ow] = xin[ow * stride];
          }
          std::fill(out + hi, out + OW, 0.0f);
        }
      }
    }
  }
}

void col2im_add(const float* col, int C, int H, int W, int KH, int KW, int stride, int pad,
                int OH, int OW, float* dx) {
  const int ohw = OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int kh = 0; kh < KH; ++kh) {
      for (int kw = 0; kw < KW; ++kw) {
        const float* row = col + static_cast<std::ptrdiff_t>(((c * KH + kh) * KW + kw)) * ohw;
        const int off = kw - pad;
        int lo, hi;
        valid_range(OW, W, stride, off, lo, hi);
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride + kh - pad;
          if (ih < 0 || ih >= H) continue;
          float* dxr = dx + (static_cast<std::ptrdiff_t>(c) * H + ih) * W + off;
          const float* in = row + oh * OW;
          if (stride == 1) {
            for (int ow = lo; ow < hi; ++ow) dxr[ow] += in[ow];
          } else {
            for (int ow = lo; ow < hi; ++ow) dxr[ow * stride] += in[ow];
          }
        }
      }
    }
  }
}

template <class F, class DF>
Var unary(Op op, Var x, F f, DF df_from_xy) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  return x.graph->record(op, {x.id}, std::move(y), [df_from_xy](Graph& g, int self) {
    const int in = g.inputs(self)[0];
    const Tensor& xv = g.value(in);
    const Tensor& yv = g.value(self);
    const Tensor& gy = *g.grad_if_any(self);
    Tensor& gx = g.grad_buffer(in);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gy[i] * df_from_xy(xv[i], yv[i]);
  });
}

Graph& same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw ShapeError("operands belong to different graphs");
  return *a.graph;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Affine: return "affine";
    case Op::Conv2d: return "conv2d";
    case Op::ConvTranspose2d: return "conv_transpose2d";
    case Op::Upsample2x: return "upsample2x";
    case Op::Reshape: return "reshape";
    case Op::Slice: return "slice";
    case Op::Sum: return "sum";
    case Op::Mse: return "mse";
    case Op::L2Sq: return "l2sq";
    case Op::Render: return "render";
  }
  return "?";
}

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::leaf(const Tensor& t) {
  if (!t.all_finite()) throw NumericError("leaf: non-finite input " + shape_str(t.shape()));
  Node n;
  n.op = Op::Leaf;
  n.value = t;
  n.needs_grad = t.requires_grad();
  nodes_.push_back(std::move(n));
  backward_done_ = false;
  return Var{this, size() - 1};
}

Var Graph::record(Op op, std::vector<int> inputs, Tensor value, BackwardFn fn) {
  const int self = size();
  bool needs = false;
  for (int in : inputs) {
    if (in < 0 || in >= self) throw ShapeError(std::string(op_name(op)) + ": input id out of range");
    needs = needs || nodes_[static_cast<std::size_t>(in)].needs_grad;
  }
  if (!value.all_finite()) {
    throw NumericError(std::string(op_name(op)) + ": non-finite value in output " +
                       shape_str(value.shape()));
  }
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  n.needs_grad = needs;
  n.backward_fn = std::move(fn);
  nodes_.push_back(std::move(n));
  backward_done_ = false;
  return Var{this, self};
}

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor* Graph::grad_if_any(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.has_grad ? &n.grad : nullptr;
}

Tensor Graph::grad(Var v) const {
  const Tensor* g = grad_if_any(v.id);
  return g ? *g : Tensor(value(v.id).shape());
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(value(loss).shape()));
  }
  const Cotangent seed{loss, Tensor(value(loss).shape(), 1.0f)};
  backward(std::span<const Cotangent>(&seed, 1));
}

void Graph::backward(std::span<const Cotangent> seeds) {
  if (backward_done_) throw std::logic_error("backward called twice without a new forward pass");
  int top = -1;
  for (const Cotangent& s : seeds) {
    if (s.node.graph != this) throw ShapeError("backward: seed from another graph");
    if (s.grad.shape() != value(s.node).shape()) {
      shape_fail(Op::Leaf, s.grad.shape(), value(s.node).shape());
    }
    add_into(grad_buffer(s.node.id), s.grad);
    top = std::max(top, s.node.id);
  }
  backward_done_ = true;
  for (int id = top; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.needs_grad || !n.backward_fn) continue;
    n.backward_fn(*this, id);
  }
}

void inject_external_gradient(Graph& g, Var node, const Tensor& grad) {
  const Cotangent seed{node, grad};
  g.backward(std::span<const Cotangent>(&seed, 1));
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    shape_fail(Op::MatMul, av.shape(), bv.shape());
  }
  const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor c({m, n});
  MapR(c.ptr(), m, n).noalias() = CMapR(av.ptr(), m, k) * CMapR(bv.ptr(), k, n);
  return g.record(Op::MatMul, {a.id, b.id}, std::move(c), [m, k, n](Graph& g, int self) {
    const int ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    CMapR gc(g.grad_if_any(self)->ptr(), m, n);
    if (g.needs_grad(ia)) {
      MapR(g.grad_buffer(ia).ptr(), m, k).noalias() += gc * CMapR(g.value(ib).ptr(), k, n).transpose();
    }
    if (g.needs_grad(ib)) {
      MapR(g.grad_buffer(ib).ptr(), k, n).noalias() += CMapR(g.value(ia).ptr(), m, k).transpose() * gc;
    }
  });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor c = av;
    c.set_requires_grad(false);
    add_into(c, bv);
    return g.record(Op::Add, {a.id, b.id}, std::move(c), [](Graph& g, int self) {
      const Tensor& gc = *g.grad_if_any(self);
      for (int in : g.inputs(self))
        if (g.needs_grad(in)) add_into(g.grad_buffer(in), gc);
    });
  }
  // Bias add: trailing dimension of a matches the 1-D b.
  if (bv.rank() != 1 || av.rank() < 1 || av.shape().back() != bv.dim(0)) {
    shape_fail(Op::Add, av.shape(), bv.shape());
  }
  const std::size_t n = static_cast<std::size_t>(bv.dim(0));
  const std::size_t rows = av.size() / n;
  Tensor c(av.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) c[r * n + j] = av[r * n + j] + bv[j];
  return g.record(Op::Add, {a.id, b.id}, std::move(c), [rows, n](Graph& g, int self) {
    const int ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const Tensor& gc = *g.grad_if_any(self);
    if (g.needs_grad(ia)) add_into(g.grad_buffer(ia), gc);
    if (g.needs_grad(ib)) {
      Tensor& gb = g.grad_buffer(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) gb[j] += gc[r * n + j];
    }
  });
}

Var sub(Var a, Var b) { return add(a, affine(b, -1.0f)); }

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_fail(Op::Mul, av.shape(), bv.shape());
  Tensor c(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) c[i] = av[i] * bv[i];
  return g.record(Op::Mul, {a.id, b.id}, std::move(c), [](Graph& g, int self) {
    const int ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const Tensor& gc = *g.grad_if_any(self);
    const Tensor& av = g.value(ia);
    const Tensor& bv = g.value(ib);
    if (g.needs_grad(ia)) {
      Tensor& ga = g.grad_buffer(ia);
      for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * bv[i];
    }
    if (g.needs_grad(ib)) {
      Tensor& gb = g.grad_buffer(ib);
      for (std::size_t i = 0; i < gc.size(); ++i) gb[i] += gc[i] * av[i];
    }
  });
}

Var relu(Var x) {
  return unary(
      Op::Relu, x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float xv, float) { return xv > 0.0f ? 1.0f : 0.0f; });
}

Var sigmoid(Var x) {
  return unary(
      Op::Sigmoid, x,
      [](float v) {
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Var tanh(Var x) {
  return unary(
      Op::Tanh, x, [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Var exp(Var x) {
  return unary(
      Op::Exp, x, [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Var affine(Var x, float scale, float shift) {
  return unary(
      Op::Affine, x, [scale, shift](float v) { return scale * v + shift; },
      [scale](float, float) { return scale; });
}

Var conv2d(Var x, Var w, std::optional<Var> bias, Conv2dAttrs attrs) {
  Graph& g = same_graph(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(1)) {
    shape_fail(Op::Conv2d, xv.shape(), wv.shape());
  }
  if (attrs.stride < 1 || attrs.pad < 0) throw ShapeError("conv2d: invalid stride/padding");
  const int pad_end = attrs.pad_end < 0 ? attrs.pad : attrs.pad_end;
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int O = wv.dim(0), KH = wv.dim(2), KW = wv.dim(3);
  const int stride = attrs.stride, pad = attrs.pad;
  const int hspan = H + pad + pad_end - KH, wspan = W + pad + pad_end - KW;
  if (hspan < 0 || wspan < 0) shape_fail(Op::Conv2d, xv.shape(), wv.shape());
  const int OH = hspan / stride + 1, OW = wspan / stride + 1;
  if (bias) {
    if (bias->graph != &g || bias->value().rank() != 1 || bias->value().dim(0) != O) {
      shape_fail(Op::Conv2d, wv.shape(), bias->value().shape());
    }
  }
  const int ckk = C * KH * KW, ohw = OH * OW;
  Tensor y({N, O, OH, OW});
  Buffer col(static_cast<std::size_t>(ckk) * ohw);
  CMapR wm(wv.ptr(), O, ckk);
  for (int n = 0; n < N; ++n) {
    im2col(xv.ptr() + static_cast<std::ptrdiff_t>(n) * C * H * W, C, H, W, KH, KW, stride, pad, OH,
           OW, col.data());
    MapR ym(y.ptr() + static_cast<std::ptrdiff_t>(n) * O * ohw, O, ohw);
    ym.noalias() = wm * CMapR(col.data(), ckk, ohw);
    if (bias) {
      const Tensor& bv = bias->value();
      for (int o = 0; o < O; ++o) ym.row(o).array() += bv[static_cast<std::size_t>(o)];
    }
  }
  std::vector<int> ins{x.id, w.id};
  if (bias) ins.push_back(bias->id);
  return g.record(Op::Conv2d, std::move(ins), std::move(y),
                  [=](Graph& g, int self) {
                    const auto& in = g.inputs(self);
                    const Tensor& xv = g.value(in[0]);
                    const Tensor& wv = g.value(in[1]);
                    const Tensor& gy = *g.grad_if_any(self);
                    const bool gx_on = g.needs_grad(in[0]);
                    const bool gw_on = g.needs_grad(in[1]);
                    const bool gb_on = in.size() > 2 && g.needs_grad(in[2]);
                    Buffer col(static_cast<std::size_t>(ckk) * ohw);
                    Buffer dcol(gx_on ? col.size() : 0);
                    CMapR wm(wv.ptr(), O, ckk);
                    for (int n = 0; n < N; ++n) {
                      CMapR gym(gy.ptr() + static_cast<std::ptrdiff_t>(n) * O * ohw, O, ohw);
                      if (gw_on) {
                        im2col(xv.ptr() + static_cast<std::ptrdiff_t>(n) * C * H * W, C, H, W, KH,
                               KW, stride, pad, OH, OW, col.data());
                        MapR(g.grad_buffer(in[1]).ptr(), O, ckk).noalias() +=
                            gym * CMapR(col.data(), ckk, ohw).transpose();
                      }
                      if (gb_on) {
                        Tensor& gb = g.grad_buffer(in[2]);
                        for (int o = 0; o < O; ++o) gb[static_cast<std::size_t>(o)] += gym.row(o).sum();
                      }
                      if (gx_on) {
                        MapR(dcol.data(), ckk, ohw).noalias() = wm.transpose() * gym;
                        col2im_add(dcol.data(), C, H, W, KH, KW, stride, pad, OH, OW,
                                   g.grad_buffer(in[0]).ptr() +
                                       static_cast<std::ptrdiff_t>(n) * C * H * W);
                      }
                    }
                  });
}

Var conv_transpose2d(Var x, Var w, std::optional<Var> bias, int stride, int pad) {
  Graph& g = same_graph(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(0)) {
    shape_fail(Op::ConvTranspose2d, xv.shape(), wv.shape());
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv_transpose2d: invalid stride/padding");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int O = wv.dim(1), KH = wv.dim(2), KW = wv.dim(3);
  const int OH = (H - 1) * stride - 2 * pad + KH, OW = (W - 1) * stride - 2 * pad + KW;
  if (OH < 1 || OW < 1) shape_fail(Op::ConvTranspose2d, xv.shape(), wv.shape());
  if (bias) {
    if (bias->graph != &g || bias->value().rank() != 1 || bias->value().dim(0) != O) {
      shape_fail(Op::ConvTranspose2d, wv.shape(), bias->value().shape());
    }
  }
  const int okk = O * KH * KW, hw = H * W, ohw = OH * OW;
  Tensor y({N, O, OH, OW});
  Buffer col(static_cast<std::size_t>(okk) * hw);
  CMapR wm(wv.ptr(), C, okk);
  for (int n = 0; n < N; ++n) {
    MapR(col.data(), okk, hw).noalias() = wm.transpose() * CMapR(xv.ptr() + static_cast<std::ptrdiff_t>(n) * C * hw, C, hw);
    float* yn = y.ptr() + static_cast<std::ptrdiff_t>(n) * O * ohw;
    col2im_add(col.data(), O, OH, OW, KH, KW, stride, pad, H, W, yn);
    if (bias) {
      const Tensor& bv = bias->value();
      for (int o = 0; o < O; ++o) MapR(yn + o * ohw, 1, ohw).array() += bv[static_cast<std::size_t>(o)];
    }
  }
  std::vector<int> ins{x.id, w.id};
  if (bias) ins.push_back(bias->id);
  return g.record(Op::ConvTranspose2d, std::move(ins), std::move(y),
                  [=](Graph& g, int self) {
                    const auto& in = g.inputs(self);
                    const Tensor& xv = g.value(in[0]);
                    const Tensor& wv = g.value(in[1]);
                    const Tensor& gy = *g.grad_if_any(self);
                    const bool gx_on = g.needs_grad(in[0]);
                    const bool gw_on = g.needs_grad(in[1]);
                    const bool gb_on = in.size() > 2 && g.needs_grad(in[2]);
                    Buffer colg(static_cast<std::size_t>(okk) * hw);
                    CMapR wm(wv.ptr(), C, okk);
                    for (int n = 0; n < N; ++n) {
                      const float* gyn = gy.ptr() + static_cast<std::ptrdiff_t>(n) * O * ohw;
                      if (gx_on || gw_on) {
                        im2col(gyn, O, OH, OW, KH, KW, stride, pad, H, W, colg.data());
                        CMapR cg(colg.data(), okk, hw);
                        if (gx_on) {
                          MapR(g.grad_buffer(in[0]).ptr() + static_cast<std::ptrdiff_t>(n) * C * hw, C, hw)
                              .noalias() += wm * cg;
                        }
                        if (gw_on) {
                          MapR(g.grad_buffer(in[1]).ptr(), C, okk).noalias() +=
                              CMapR(xv.ptr() + static_cast<std::ptrdiff_t>(n) * C * hw, C, hw) * cg.transpose();
                        }
                      }
                      if (gb_on) {
                        Tensor& gb = g.grad_buffer(in[2]);
                        for (int o = 0; o < O; ++o) gb[static_cast<std::size_t>(o)] += CMapR(gyn + o * ohw, 1, ohw).sum();
                      }
                    }
                  });
}

Var upsample2x(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) shape_fail(Op::Upsample2x, xv.shape(), Shape{});
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  Tensor y({N, C, 2 * H, 2 * W});
  const std::size_t planes = static_cast<std::size_t>(N) * C;
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = xv.ptr() + p * H * W;
    float* dst = y.ptr() + p * 4 * H * W;
    for (int i = 0; i < 2 * H; ++i)
      for (int j = 0; j < 2 * W; ++j) dst[i * 2 * W + j] = src[(i / 2) * W + j / 2];
  }
  return x.graph->record(Op::Upsample2x, {x.id}, std::move(y), [planes, H, W](Graph& g, int self) {
    const int in = g.inputs(self)[0];
    const Tensor& gy = *g.grad_if_any(self);
    Tensor& gx = g.grad_buffer(in);
    for (std::size_t p = 0; p < planes; ++p) {
      const float* src = gy.ptr() + p * 4 * H * W;
      float* dst = gx.ptr() + p * H * W;
      for (int i = 0; i < 2 * H; ++i)
        for (int j = 0; j < 2 * W; ++j) dst[(i / 2) * W + j / 2] += src[i * 2 * W + j];
    }
  });
}

Var reshape(Var x, Shape shape) {
  const Tensor& xv = x.value();
  if (shape_numel(shape) != xv.size()) shape_fail(Op::Reshape, xv.shape(), shape);
  Tensor y = xv.reshaped(std::move(shape));
  y.set_requires_grad(false);
  return x.graph->record(Op::Reshape, {x.id}, std::move(y), [](Graph& g, int self) {
    const int in = g.inputs(self)[0];
    add_into(g.grad_buffer(in), *g.grad_if_any(self));
  });
}

Var slice(Var x, int axis, int begin, int end) {
  const Tensor& xv = x.value();
  if (axis < 0 || axis >= xv.rank() || begin < 0 || end > xv.dim(axis) || begin >= end) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " invalid for " + shape_str(xv.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(xv.dim(i));
  for (int i = axis + 1; i < xv.rank(); ++i) inner *= static_cast<std::size_t>(xv.dim(i));
  const std::size_t full = static_cast<std::size_t>(xv.dim(axis));
  const std::size_t len = static_cast<std::size_t>(end - begin);
  const std::size_t off = static_cast<std::size_t>(begin);
  Shape s = xv.shape();
  s[static_cast<std::size_t>(axis)] = end - begin;
  Tensor y(s);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.ptr() + (o * full + off) * inner, len * inner, y.ptr() + o * len * inner);
  return x.graph->record(Op::Slice, {x.id}, std::move(y),
                         [outer, inner, full, len, off](Graph& g, int self) {
                           const int in = g.inputs(self)[0];
                           const Tensor& gy = *g.grad_if_any(self);
                           Tensor& gx = g.grad_buffer(in);
                           for (std::size_t o = 0; o < outer; ++o) {
                             float* d = gx.ptr() + (o * full + off) * inner;
                             const float* s = gy.ptr() + o * len * inner;
                             for (std::size_t i = 0; i < len * inner; ++i) d[i] += s[i];
                           }
                         });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double acc = 0.0;
  for (float v : xv.data()) acc += v;
  return x.graph->record(Op::Sum, {x.id}, Tensor::scalar(static_cast<float>(acc)),
                         [](Graph& g, int self) {
                           const int in = g.inputs(self)[0];
                           const float gs = g.grad_if_any(self)->item();
                           for (float& v : g.grad_buffer(in).data()) v += gs;
                         });
}

Var mse(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_fail(Op::Mse, av.shape(), bv.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    acc += d * d;
  }
  const double n = static_cast<double>(av.size());
  return g.record(Op::Mse, {a.id, b.id}, Tensor::scalar(static_cast<float>(acc / n)),
                  [n](Graph& g, int self) {
                    const int ia = g.inputs(self)[0], ib = g.inputs(self)[1];
                    const Tensor& av = g.value(ia);
                    const Tensor& bv = g.value(ib);
                    const float k = static_cast<float>(2.0 / n) * g.grad_if_any(self)->item();
                    if (g.needs_grad(ia)) {
                      Tensor& ga = g.grad_buffer(ia);
                      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += k * (av[i] - bv[i]);
                    }
                    if (g.needs_grad(ib)) {
                      Tensor& gb = g.grad_buffer(ib);
                      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= k * (av[i] - bv[i]);
                    }
                  });
}

Var l2sq(Var x) {
  const Tensor& xv = x.value();
  double acc = 0.0;
  for (float v : xv.data()) acc += static_cast<double>(v) * v;
  return x.graph->record(Op::L2Sq, {x.id}, Tensor::scalar(static_cast<float>(acc)),
                         [](Graph& g, int self) {
                           const int in = g.inputs(self)[0];
                           const Tensor& xv = g.value(in);
                           const float k = 2.0f * g.grad_if_any(self)->item();
                           Tensor& gx = g.grad_buffer(in);
                           for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += k * xv[i];
                         });
}

}  // namespace taskaug::ad
