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

#include <cmath>
#include <string>
#include <vector>

#include "diffseg/autodiff.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

// Flat registry of named parameter tensors. Modules register parameters at
// construction time (deterministic order) and keep the returned indices.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  int add(std::string name, Tensor value) {
    entries_.push_back({std::move(name), std::move(value)});
    return static_cast<int>(entries_.size()) - 1;
  }

  int count() const { return static_cast<int>(entries_.size()); }
  Entry& entry(int i) { return entries_.at(static_cast<std::size_t>(i)); }
  const Entry& entry(int i) const { return entries_.at(static_cast<std::size_t>(i)); }

  std::int64_t total_scalars() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
};

// Leaf variables over a ParamStore for one forward/backward pass. Parameter
// values are shared (no copy); gradients live on the binding's leaves.
class Binding {
 public:
  explicit Binding(const ParamStore& store, bool requires_grad) {
    vars_.reserve(static_cast<std::size_t>(store.count()));
    for (int i = 0; i < store.count(); ++i)
      vars_.push_back(Var::leaf(store.entry(i).value, requires_grad));
  }

  const Var& operator[](int i) const { return vars_.at(static_cast<std::size_t>(i)); }
  int count() const { return static_cast<int>(vars_.size()); }

  // Gradient of parameter i accumulated by backward(); zeros if untouched.
  Tensor grad_or_zeros(int i) const {
    const Var& v = vars_.at(static_cast<std::size_t>(i));
    if (v.grad().defined()) return v.grad();
    return Tensor::zeros(v.value().shape());
  }

 private:
  std::vector<Var> vars_;
};

namespace nn {

inline Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  return Tensor::rand_uniform(std::move(shape), rng, -a, a);
}

inline Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  const double a = std::sqrt(6.0 / fan_in);
  return Tensor::rand_uniform(std::move(shape), rng, -a, a);
}

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& s, const std::string& name, int in, int out, Rng& rng) {
    w_ = s.add(name + ".weight", xavier_uniform({in, out}, in, out, rng));
    b_ = s.add(name + ".bias", Tensor::zeros({out}));
  }
  Var operator()(const Binding& p, const Var& x) const {
    return add_rowvec(matmul(x, p[w_]), p[b_]);
  }

 private:
  int w_ = -1, b_ = -1;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& s, const std::string& name, int c_in, int c_out, int k, int stride, int pad,
         Rng& rng)
      : stride_(stride), pad_(pad) {
    w_ = s.add(name + ".weight", kaiming_uniform({c_out, c_in, k, k}, c_in * k * k, rng));
    b_ = s.add(name + ".bias", Tensor::zeros({c_out}));
  }
  Var operator()(const Binding& p, const Var& x) const {
    return conv2d(x, p[w_], p[b_], stride_, pad_);
  }

 private:
  int w_ = -1, b_ = -1;
  int stride_ = 1, pad_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& s, const std::string& name, int dim) {
    g_ = s.add(name + ".gain", Tensor::full({dim}, 1.0));
    b_ = s.add(name + ".shift", Tensor::zeros({dim}));
  }
  Var operator()(const Binding& p, const Var& x) const { return layer_norm(x, p[g_], p[b_]); }

 private:
  int g_ = -1, b_ = -1;
};

// Multi-head attention. Keys may carry an additive positional encoding;
// `attn_bias` (0 / -inf per query-position pair) masks attention exactly.
class MultiheadAttention {
 public:
  MultiheadAttention() = default;
  MultiheadAttention(ParamStore& s, const std::string& name, int dim, int heads, Rng& rng)
      : heads_(heads), dim_(dim) {
    if (dim % heads != 0) throw InvalidArgument("MultiheadAttention: dim % heads != 0");
    q_ = Linear(s, name + ".q", dim, dim, rng);
    k_ = Linear(s, name + ".k", dim, dim, rng);
    v_ = Linear(s, name + ".v", dim, dim, rng);
    o_ = Linear(s, name + ".o", dim, dim, rng);
  }

  Var operator()(const Binding& p, const Var& query, const Var& key_in, const Var& value_in,
                 const Tensor* attn_bias = nullptr) const {
    const int d = dim_ / heads_;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Var q = q_(p, query);
    Var k = k_(p, key_in);
    Var v = v_(p, value_in);
    std::vector<Var> outs;
    outs.reserve(static_cast<std::size_t>(heads_));
    for (int h = 0; h < heads_; ++h) {
      Var qh = col_slice(q, h * d, (h + 1) * d);
      Var kh = col_slice(k, h * d, (h + 1) * d);
      Var vh = col_slice(v, h * d, (h + 1) * d);
      Var logits = vscale(matmul(qh, kh, false, true), inv_sqrt_d);
      Var attn = softmax_rows(logits, attn_bias);
      outs.push_back(matmul(attn, vh));
    }
    return o_(p, concat_cols(outs));
  }

 private:
  Linear q_, k_, v_, o_;
  int heads_ = 0, dim_ = 0;
};

// Sinusoidal embedding of a scalar timestep, dimension `dim` (even).
inline Tensor time_embedding(int t, int dim) {
  Tensor e({dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    e[2 * i] = std::sin(t * freq);
    e[2 * i + 1] = std::cos(t * freq);
  }
  return e;
}

// 2-D sinusoidal positional encoding for an h x w grid, as (h*w) x dim rows.
// First half of the channels encodes y, second half encodes x.
inline Tensor position_embedding_2d(int h, int w, int dim) {
  if (dim % 4 != 0) throw InvalidArgument("position_embedding_2d: dim % 4 != 0");
  const int quarter = dim / 4;
  Tensor e({h * w, dim});
  const double two_pi = 2.0 * M_PI;
  for (int y = 0; y < h; ++y) {
    const double ny = (y + 0.5) / h * two_pi;
    for (int x = 0; x < w; ++x) {
      const double nx = (x + 0.5) / w * two_pi;
      double* row = e.data() + static_cast<std::int64_t>(y * w + x) * dim;
      for (int i = 0; i < quarter; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / quarter);
        row[2 * i] = std::sin(ny * freq);
        row[2 * i + 1] = std::cos(ny * freq);
        row[dim / 2 + 2 * i] = std::sin(nx * freq);
        row[dim / 2 + 2 * i + 1] = std::cos(nx * freq);
      }
    }
  }
  return e;
}

// Adds a constant row vector (e.g. a time embedding) to every row.
inline Var add_const_rowvec(const Var& x, const Tensor& v) {
  return add_rowvec(x, Var::constant(v));
}

}  // namespace nn
}  // namespace diffseg
