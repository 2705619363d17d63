// Copyright 2026 The diffseg Authors.
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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_set>
#include <vector>

#include "diffseg/tensor.hpp"

namespace diffseg {

// Reverse-mode tape. Each op creates a node holding its output value and a
// closure that scatters the output gradient back to the inputs. Node ids
// increase in creation order, which is a topological order of the graph.
namespace ad {

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

inline std::uint64_t next_node_id() {
  static std::uint64_t counter = 0;
  return ++counter;
}

}  // namespace ad

class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value, bool requires_grad) {
    Var v;
    v.n_ = std::make_shared<ad::Node>();
    v.n_->value = std::move(value);
    v.n_->requires_grad = requires_grad;
    v.n_->id = ad::next_node_id();
    return v;
  }

  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  const Tensor& grad() const { return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }
  const std::shared_ptr<ad::Node>& node() const { return n_; }

  double scalar() const {
    if (n_->value.size() != 1) throw InvalidArgument("Var::scalar: not a scalar");
    return n_->value[0];
  }

  static Var make(Tensor value, std::vector<Var> inputs, std::function<void(ad::Node&)> backward) {
    Var v;
    v.n_ = std::make_shared<ad::Node>();
    v.n_->value = std::move(value);
    for (auto& in : inputs) {
      v.n_->requires_grad = v.n_->requires_grad || in.requires_grad();
      v.n_->inputs.push_back(in.n_);
    }
    if (v.n_->requires_grad) v.n_->backward_fn = std::move(backward);
    v.n_->id = ad::next_node_id();
    return v;
  }

 private:
  std::shared_ptr<ad::Node> n_;
};

// Runs reverse-mode accumulation from a scalar root. Leaf grads accumulate
// across calls; callers reset leaves between iterations.
inline void backward(const Var& root) {
  if (root.value().size() != 1) throw InvalidArgument("backward: root must be scalar");
  if (!root.requires_grad()) return;
  std::vector<ad::Node*> order;
  std::unordered_set<ad::Node*> seen;
  std::vector<ad::Node*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    ad::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const ad::Node* a, const ad::Node* b) { return a->id > b->id; });
  root.node()->ensure_grad()[0] += 1.0;
  for (ad::Node* n : order) {
    if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops
// ---------------------------------------------------------------------------

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw InvalidArgument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
}

inline Var vadd(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "vadd");
  Tensor out = a.value().clone();
  out.vec() += b.value().vec();
  return Var::make(std::move(out), {a, b}, [](ad::Node& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->ensure_grad().vec() += n.grad.vec();
    if (n.inputs[1]->requires_grad) n.inputs[1]->ensure_grad().vec() += n.grad.vec();
  });
}

inline Var vsub(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "vsub");
  Tensor out = a.value().clone();
  out.vec() -= b.value().vec();
  return Var::make(std::move(out), {a, b}, [](ad::Node& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->ensure_grad().vec() += n.grad.vec();
    if (n.inputs[1]->requires_grad) n.inputs[1]->ensure_grad().vec() -= n.grad.vec();
  });
}

inline Var vmul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "vmul");
  Tensor out = a.value().clone();
  out.vec().array() *= b.value().vec().array();
  return Var::make(std::move(out), {a, b}, [](ad::Node& n) {
    if (n.inputs[0]->requires_grad)
      n.inputs[0]->ensure_grad().vec().array() +=
          n.grad.vec().array() * n.inputs[1]->value.vec().array();
    if (n.inputs[1]->requires_grad)
      n.inputs[1]->ensure_grad().vec().array() +=
          n.grad.vec().array() * n.inputs[0]->value.vec().array();
  });
}

inline Var vscale(const Var& a, double s) {
  Tensor out = a.value().clone();
  out.vec() *= s;
  return Var::make(std::move(out), {a}, [s](ad::Node& n) {
    n.inputs[0]->ensure_grad().vec() += s * n.grad.vec();
  });
}

// x: M x N, v: N. Adds v to every row.
inline Var add_rowvec(const Var& x, const Var& v) {
  const Tensor& xt = x.value();
  if (xt.rank() != 2 || v.value().rank() != 1 || v.value().dim(0) != xt.dim(1))
    throw InvalidArgument("add_rowvec: want MxN plus N");
  Tensor out = xt.clone();
  out.mat().rowwise() += v.value().vec().transpose();
  return Var::make(std::move(out), {x, v}, [](ad::Node& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->ensure_grad().vec() += n.grad.vec();
    if (n.inputs[1]->requires_grad)
      n.inputs[1]->ensure_grad().vec() +=
          n.grad.mat(n.inputs[0]->value.dim(0), n.inputs[0]->value.dim(1))
              .colwise()
              .sum()
              .transpose();
  });
}

inline Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out = x.value().reshaped(shape);  // shares storage; value never mutated
  return Var::make(std::move(out), {x}, [](ad::Node& n) {
    n.inputs[0]->ensure_grad().vec() += n.grad.vec();
  });
}

inline Var col_slice(const Var& x, int c0, int c1) {
  const Tensor& xt = x.value();
  if (xt.rank() != 2 || c0 < 0 || c1 > xt.dim(1) || c0 >= c1)
    throw InvalidArgument("col_slice: bad range");
  const int m = xt.dim(0), w = c1 - c0;
  Tensor out({m, w});
  out.mat() = xt.mat().middleCols(c0, w);
  return Var::make(std::move(out), {x}, [c0, w, m](ad::Node& n) {
    Tensor& g = n.inputs[0]->ensure_grad();
    g.mat(m, n.inputs[0]->value.dim(1)).middleCols(c0, w) += n.grad.mat(m, w);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: empty");
  const int m = parts[0].value().dim(0);
  int total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.value().dim(0) != m)
      throw InvalidArgument("concat_cols: row mismatch");
    total += p.value().dim(1);
  }
  Tensor out({m, total});
  int off = 0;
  for (const auto& p : parts) {
    out.mat().middleCols(off, p.value().dim(1)) = p.value().mat();
    off += p.value().dim(1);
  }
  return Var::make(std::move(out), parts, [m](ad::Node& n) {
    int off = 0;
    for (auto& in : n.inputs) {
      const int w = in->value.dim(1);
      if (in->requires_grad)
        in->ensure_grad().mat(m, w) += n.grad.mat(m, n.value.dim(1)).middleCols(off, w);
      off += w;
    }
  });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline Var gelu(const Var& x) {
  const Tensor& xt = x.value();
  Tensor out(xt.shape());
  const std::int64_t sz = xt.size();
  for (std::int64_t i = 0; i < sz; ++i) {
    const double v = xt[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  }
  return Var::make(std::move(out), {x}, [](ad::Node& n) {
    const Tensor& xv = n.inputs[0]->value;
    Tensor& g = n.inputs[0]->ensure_grad();
    const std::int64_t sz = xv.size();
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::int64_t i = 0; i < sz; ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += n.grad[i] * (cdf + v * pdf);
    }
  });
}

inline Var sigmoid(const Var& x) {
  const Tensor& xt = x.value();
  Tensor out(xt.shape());
  const std::int64_t sz = xt.size();
  for (std::int64_t i = 0; i < sz; ++i) {
    const double v = xt[i];
    out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tensor y = out;  // shared storage, captured for backward
  return Var::make(std::move(out), {x}, [y](ad::Node& n) {
    Tensor& g = n.inputs[0]->ensure_grad();
    const std::int64_t sz = y.size();
    for (std::int64_t i = 0; i < sz; ++i) g[i] += n.grad[i] * y[i] * (1.0 - y[i]);
  });
}

// ---------------------------------------------------------------------------
// Matrix / conv ops
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false) {
  const Tensor& at = a.value();
  const Tensor& bt = b.value();
  if (at.rank() != 2 || bt.rank() != 2) throw InvalidArgument("matmul: rank-2 operands required");
  const int m = trans_a ? at.dim(1) : at.dim(0);
  const int ka = trans_a ? at.dim(0) : at.dim(1);
  const int kb = trans_b ? bt.dim(1) : bt.dim(0);
  const int n = trans_b ? bt.dim(0) : bt.dim(1);
  if (ka != kb)
    throw InvalidArgument("matmul: inner dimension mismatch " + at.shape_str() + " vs " +
                          bt.shape_str());
  Tensor out({m, n});
  auto A = at.mat();
  auto B = bt.mat();
  if (!trans_a && !trans_b)
    out.mat().noalias() = A * B;
  else if (trans_a && !trans_b)
    out.mat().noalias() = A.transpose() * B;
  else if (!trans_a && trans_b)
    out.mat().noalias() = A * B.transpose();
  else
    out.mat().noalias() = A.transpose() * B.transpose();
  return Var::make(std::move(out), {a, b}, [trans_a, trans_b, m, n](ad::Node& nd) {
    auto G = nd.grad.mat(m, n);
    ad::Node& na = *nd.inputs[0];
    ad::Node& nb = *nd.inputs[1];
    auto A = na.value.mat();
    auto B = nb.value.mat();
    if (na.requires_grad) {
      auto GA = na.ensure_grad().mat();
      if (!trans_a && !trans_b)
        GA.noalias() += G * B.transpose();
      else if (!trans_a && trans_b)
        GA.noalias() += G * B;
      else if (trans_a && !trans_b)
        GA.noalias() += B * G.transpose();
      else
        GA.noalias() += B.transpose() * G.transpose();
    }
    if (nb.requires_grad) {
      auto GB = nb.ensure_grad().mat();
      if (!trans_a && !trans_b)
        GB.noalias() += A.transpose() * G;
      else if (!trans_a && trans_b)
        GB.noalias() += G.transpose() * A;
      else if (trans_a && !trans_b)
        GB.noalias() += A * G;
      else
        GB.noalias() += G.transpose() * A.transpose();
    }
  });
}

namespace ad {

inline Tensor im2col(const Tensor& x, int k, int stride, int pad, int h_out, int w_out) {
  const int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor col({c_in * k * k, h_out * w_out});
  double* cd = col.data();
  const double* xd = x.data();
  for (int c = 0; c < c_in; ++c) {
    for (int di = 0; di < k; ++di) {
      for (int dj = 0; dj < k; ++dj) {
        const int row = (c * k + di) * k + dj;
        double* dst = cd + static_cast<std::int64_t>(row) * h_out * w_out;
        for (int oy = 0; oy < h_out; ++oy) {
          const int iy = oy * stride + di - pad;
          if (iy < 0 || iy >= h) {
            std::fill(dst + oy * w_out, dst + (oy + 1) * w_out, 0.0);
            continue;
          }
          const double* src = xd + (static_cast<std::int64_t>(c) * h + iy) * w;
          for (int ox = 0; ox < w_out; ++ox) {
            const int ix = ox * stride + dj - pad;
            dst[oy * w_out + ox] = (ix < 0 || ix >= w) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
  return col;
}

inline void col2im_add(const Tensor& col, int k, int stride, int pad, int h_out, int w_out,
                       Tensor& dx) {
  const int c_in = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
  const double* cd = col.data();
  double* xd = dx.data();
  for (int c = 0; c < c_in; ++c) {
    for (int di = 0; di < k; ++di) {
      for (int dj = 0; dj < k; ++dj) {
        const int row = (c * k + di) * k + dj;
        const double* src = cd + static_cast<std::int64_t>(row) * h_out * w_out;
        for (int oy = 0; oy < h_out; ++oy) {
          const int iy = oy * stride + di - pad;
          if (iy < 0 || iy >= h) continue;
          double* dst = xd + (static_cast<std::int64_t>(c) * h + iy) * w;
          for (int ox = 0; ox < w_out; ++ox) {
            const int ix = ox * stride + dj - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[oy * w_out + ox];
          }
        }
      }
    }
  }
}

}  // namespace ad

// x: Cin x H x W, w: Cout x Cin x k x k, b: Cout.
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Tensor& xt = x.value();
  const Tensor& wt = w.value();
  if (xt.rank() != 3 || wt.rank() != 4) throw InvalidArgument("conv2d: want CHW input, OIKK kernel");
  if (wt.dim(1) != xt.dim(0)) throw InvalidArgument("conv2d: channel mismatch");
  if (wt.dim(2) != wt.dim(3)) throw InvalidArgument("conv2d: square kernels only");
  const int k = wt.dim(2), c_out = wt.dim(0), c_in = xt.dim(0);
  const int h_out = (xt.dim(1) + 2 * pad - k) / stride + 1;
  const int w_out = (xt.dim(2) + 2 * pad - k) / stride + 1;
  if (h_out <= 0 || w_out <= 0) throw InvalidArgument("conv2d: empty output");
  Tensor col = ad::im2col(xt, k, stride, pad, h_out, w_out);
  Tensor out({c_out, h_out, w_out});
  out.mat(c_out, h_out * w_out).noalias() = wt.mat(c_out, c_in * k * k) * col.mat();
  if (b.defined()) {
    auto o = out.mat(c_out, h_out * w_out);
    o.colwise() += b.value().vec();
  }
  std::vector<Var> ins = {x, w};
  if (b.defined()) ins.push_back(b);
  return Var::make(std::move(out), std::move(ins),
                   [col, k, stride, pad, h_out, w_out, c_out, c_in](ad::Node& n) {
                     auto G = n.grad.mat(c_out, h_out * w_out);
                     ad::Node& nx = *n.inputs[0];
                     ad::Node& nw = *n.inputs[1];
                     if (nw.requires_grad)
                       nw.ensure_grad().mat(c_out, c_in * k * k).noalias() += G * col.mat().transpose();
                     if (n.inputs.size() > 2 && n.inputs[2]->requires_grad)
                       n.inputs[2]->ensure_grad().vec() += G.rowwise().sum();
                     if (nx.requires_grad) {
                       Tensor dcol({c_in * k * k, h_out * w_out});
                       dcol.mat().noalias() = nw.value.mat(c_out, c_in * k * k).transpose() * G;
                       ad::col2im_add(dcol, k, stride, pad, h_out, w_out, nx.ensure_grad());
                     }
                   });
}

// C x H x W -> (H*W) x C row matrix.
inline Var spatial_rows(const Var& x) {
  const Tensor& xt = x.value();
  if (xt.rank() != 3) throw InvalidArgument("spatial_rows: want CHW");
  const int c = xt.dim(0), p = xt.dim(1) * xt.dim(2);
  Tensor out({p, c});
  out.mat().noalias() = xt.mat(c, p).transpose();
  return Var::make(std::move(out), {x}, [c, p](ad::Node& n) {
    n.inputs[0]->ensure_grad().mat(c, p).noalias() += n.grad.mat(p, c).transpose();
  });
}

// Nearest-neighbor resize of a CHW map to (h2, w2).
inline Var resize_nearest(const Var& x, int h2, int w2) {
  const Tensor& xt = x.value();
  if (xt.rank() != 3) throw InvalidArgument("resize_nearest: want CHW");
  const int c = xt.dim(0), h = xt.dim(1), w = xt.dim(2);
  std::vector<int> ys(h2), xs(w2);
  for (int y = 0; y < h2; ++y)
    ys[y] = std::min(h - 1, static_cast<int>((y + 0.5) * h / h2));
  for (int xph = 0; xph < w2; ++xph)
    xs[xph] = std::min(w - 1, static_cast<int>((xph + 0.5) * w / w2));
  Tensor out({c, h2, w2});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h2; ++y)
      for (int xph = 0; xph < w2; ++xph) out.at(ch, y, xph) = xt.at(ch, ys[y], xs[xph]);
  return Var::make(std::move(out), {x}, [c, h2, w2, ys, xs](ad::Node& n) {
    Tensor& g = n.inputs[0]->ensure_grad();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h2; ++y)
        for (int xph = 0; xph < w2; ++xph) g.at(ch, ys[y], xs[xph]) += n.grad.at(ch, y, xph);
  });
}

// ---------------------------------------------------------------------------
// Normalization / softmax
// ---------------------------------------------------------------------------

// Softmax over rows of an M x N matrix. `bias` (optional, constant) is added
// to the logits first; -inf entries mask positions out exactly.
inline Var softmax_rows(const Var& x, const Tensor* bias = nullptr) {
  const Tensor& xt = x.value();
  if (xt.rank() != 2) throw InvalidArgument("softmax_rows: want MxN");
  if (bias && !bias->same_shape(xt)) throw InvalidArgument("softmax_rows: bias shape mismatch");
  const int m = xt.dim(0), n = xt.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      const double z = xt.at(i, j) + (bias ? bias->at(i, j) : 0.0);
      mx = std::max(mx, z);
    }
    if (!std::isfinite(mx)) throw InvalidArgument("softmax_rows: fully masked row");
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      const double z = xt.at(i, j) + (bias ? bias->at(i, j) : 0.0);
      const double e = std::exp(z - mx);
      out.at(i, j) = e;
      s += e;
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= s;
  }
  Tensor y = out;
  return Var::make(std::move(out), {x}, [y, m, n](ad::Node& nd) {
    Tensor& g = nd.inputs[0]->ensure_grad();
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += nd.grad.at(i, j) * y.at(i, j);
      for (int j = 0; j < n; ++j) g.at(i, j) += y.at(i, j) * (nd.grad.at(i, j) - dot);
    }
  });
}

// Row-wise layer normalization of an M x N matrix with learned gain/shift.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const Tensor& xt = x.value();
  if (xt.rank() != 2) throw InvalidArgument("layer_norm: want MxN");
  const int m = xt.dim(0), n = xt.dim(1);
  if (gamma.value().size() != n || beta.value().size() != n)
    throw InvalidArgument("layer_norm: gain/shift size mismatch");
  Tensor xhat({m, n});
  Tensor inv_sigma({m});
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xt.at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xt.at(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (int j = 0; j < n; ++j) {
      xhat.at(i, j) = (xt.at(i, j) - mu) * is;
      out.at(i, j) = xhat.at(i, j) * gamma.value()[j] + beta.value()[j];
    }
  }
  return Var::make(std::move(out), {x, gamma, beta}, [xhat, inv_sigma, m, n](ad::Node& nd) {
    const Tensor& gm = nd.inputs[1]->value;
    if (nd.inputs[1]->requires_grad) {
      Tensor& gg = nd.inputs[1]->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gg[j] += nd.grad.at(i, j) * xhat.at(i, j);
    }
    if (nd.inputs[2]->requires_grad) {
      Tensor& gb = nd.inputs[2]->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb[j] += nd.grad.at(i, j);
    }
    if (nd.inputs[0]->requires_grad) {
      Tensor& gx = nd.inputs[0]->ensure_grad();
      for (int i = 0; i < m; ++i) {
        double mean_h = 0.0, mean_hx = 0.0;
        for (int j = 0; j < n; ++j) {
          const double h = nd.grad.at(i, j) * gm[j];
          mean_h += h;
          mean_hx += h * xhat.at(i, j);
        }
        mean_h /= n;
        mean_hx /= n;
        for (int j = 0; j < n; ++j) {
          const double h = nd.grad.at(i, j) * gm[j];
          gx.at(i, j) += (h - mean_h - xhat.at(i, j) * mean_hx) * inv_sigma[i];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

inline Var sum_all(const Var& x) {
  Tensor out({1});
  out[0] = x.value().sum();
  return Var::make(std::move(out), {x}, [](ad::Node& n) {
    n.inputs[0]->ensure_grad().vec().array() += n.grad[0];
  });
}

inline Var mean_all(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x.value().size());
  Tensor out({1});
  out[0] = x.value().sum() * inv;
  return Var::make(std::move(out), {x}, [inv](ad::Node& n) {
    n.inputs[0]->ensure_grad().vec().array() += n.grad[0] * inv;
  });
}

// Mean binary cross-entropy between logits and a {0,1} target, logit-stable.
inline Var bce_with_logits_mean(const Var& x, const Tensor& target) {
  check_same_shape(x.value(), target, "bce_with_logits_mean");
  const std::int64_t sz = x.value().size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < sz; ++i) {
    const double v = x.value()[i];
    acc += std::max(v, 0.0) - v * target[i] + std::log1p(std::exp(-std::abs(v)));
  }
  Tensor out({1});
  out[0] = acc / static_cast<double>(sz);
  return Var::make(std::move(out), {x}, [target, sz](ad::Node& n) {
    Tensor& g = n.inputs[0]->ensure_grad();
    const double scale = n.grad[0] / static_cast<double>(sz);
    for (std::int64_t i = 0; i < sz; ++i) {
      const double v = n.inputs[0]->value[i];
      const double sig = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      g[i] += scale * (sig - target[i]);
    }
  });
}

// Dice loss 1 - 2*sum(p*g) / (sum(p) + sum(g) + eps) on probabilities.
inline Var dice_from_probs(const Var& p, const Tensor& target, double eps = 1.0) {
  check_same_shape(p.value(), target, "dice_from_probs");
  const std::int64_t sz = p.value().size();
  double num = 0.0, sum_p = 0.0, sum_g = 0.0;
  for (std::int64_t i = 0; i < sz; ++i) {
    num += p.value()[i] * target[i];
    sum_p += p.value()[i];
    sum_g += target[i];
  }
  const double den = sum_p + sum_g + eps;
  Tensor out({1});
  out[0] = 1.0 - 2.0 * num / den;
  return Var::make(std::move(out), {p}, [target, sz, num, den](ad::Node& n) {
    Tensor& g = n.inputs[0]->ensure_grad();
    const double scale = n.grad[0];
    const double den2 = den * den;
    for (std::int64_t i = 0; i < sz; ++i)
      g[i] += scale * (-2.0) * (target[i] * den - num) / den2;
  });
}

// Weighted-mean softmax cross-entropy over rows: sum_i w_i * nll_i / sum_i w_i.
inline Var cross_entropy_rows(const Var& x, const std::vector<int>& targets,
                              const std::vector<double>& weights) {
  const Tensor& xt = x.value();
  if (xt.rank() != 2) throw InvalidArgument("cross_entropy_rows: want MxK");
  const int m = xt.dim(0), k = xt.dim(1);
  if (static_cast<int>(targets.size()) != m || static_cast<int>(weights.size()) != m)
    throw InvalidArgument("cross_entropy_rows: target/weight length mismatch");
  double total_w = 0.0, acc = 0.0;
  Tensor probs({m, k});
  for (int i = 0; i < m; ++i) {
    if (targets[i] < 0 || targets[i] >= k) throw InvalidArgument("cross_entropy_rows: bad target");
    double mx = xt.at(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, xt.at(i, j));
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      probs.at(i, j) = std::exp(xt.at(i, j) - mx);
      s += probs.at(i, j);
    }
    for (int j = 0; j < k; ++j) probs.at(i, j) /= s;
    acc += weights[i] * (std::log(s) + mx - xt.at(i, targets[i]));
    total_w += weights[i];
  }
  if (total_w <= 0.0) throw InvalidArgument("cross_entropy_rows: non-positive weight sum");
  Tensor out({1});
  out[0] = acc / total_w;
  return Var::make(std::move(out), {x}, [probs, targets, weights, total_w, m, k](ad::Node& n) {
    Tensor& g = n.inputs[0]->ensure_grad();
    const double scale = n.grad[0] / total_w;
    for (int i = 0; i < m; ++i) {
      const double wi = weights[i] * scale;
      for (int j = 0; j < k; ++j)
        g.at(i, j) += wi * (probs.at(i, j) - (j == targets[i] ? 1.0 : 0.0));
    }
  });
}

}  // namespace diffseg
