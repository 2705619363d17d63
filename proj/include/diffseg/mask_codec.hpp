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
#include <cstdint>
#include <limits>
#include <vector>

#include "diffseg/errors.hpp"
#include "diffseg/interp.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/schedule.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

enum class MaskState { Binary, Encoded, Noisy };

// Fixed-size stack of N per-mask maps. Binary state holds {0,1}; encoded and
// noisy states hold values in [-b, b].
struct MaskSet {
  Tensor data;  // N x H x W
  MaskState state = MaskState::Binary;
  double b = 0.0;

  int count() const { return data.dim(0); }
  int height() const { return data.dim(1); }
  int width() const { return data.dim(2); }
};

// Boolean cross-attention footprint per mask at a feature resolution.
struct AttentionMask {
  std::vector<std::uint8_t> data;  // N * h * w
  int n = 0, h = 0, w = 0;

  bool at(int i, int y, int x) const {
    return data[(static_cast<std::size_t>(i) * h + y) * w + x] != 0;
  }

  // Additive attention bias (0 where attended, -inf where masked), N x (h*w).
  Tensor bias() const {
    Tensor t({n, h * w});
    const double neg_inf = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < data.size(); ++i) t[static_cast<std::int64_t>(i)] = data[i] ? 0.0 : neg_inf;
    return t;
  }
};

namespace detail {

// Axis-aligned rectangle with area fraction in [0.05, 0.30] at a uniformly
// random position. Height is drawn uniformly from the feasible set, then
// width uniformly from its admissible range, so the bound always holds.
inline void random_rectangle_mask(double* row, int h, int w, Rng& rng) {
  const std::int64_t area = static_cast<std::int64_t>(h) * w;
  std::int64_t a_min = static_cast<std::int64_t>(std::ceil(0.05 * area));
  std::int64_t a_max = static_cast<std::int64_t>(std::floor(0.30 * area));
  a_min = std::max<std::int64_t>(a_min, 1);
  if (a_max < a_min) a_max = a_min;  // degenerate tiny grids
  std::vector<int> feasible_heights;
  for (int rh = 1; rh <= h; ++rh) {
    const std::int64_t w_lo = (a_min + rh - 1) / rh;
    const std::int64_t w_hi = std::min<std::int64_t>(a_max / rh, w);
    if (w_lo <= w_hi && w_lo >= 1) feasible_heights.push_back(rh);
  }
  int rh = feasible_heights.empty()
               ? 1
               : feasible_heights[static_cast<std::size_t>(
                     rng.uniform_int(0, static_cast<std::int64_t>(feasible_heights.size()) - 1))];
  const std::int64_t w_lo = std::max<std::int64_t>(1, (a_min + rh - 1) / rh);
  const std::int64_t w_hi = std::max(w_lo, std::min<std::int64_t>(a_max / rh, w));
  const int rw = static_cast<int>(rng.uniform_int(w_lo, w_hi));
  const int y0 = static_cast<int>(rng.uniform_int(0, h - rh));
  const int x0 = static_cast<int>(rng.uniform_int(0, w - rw));
  for (int y = y0; y < y0 + rh; ++y)
    for (int x = x0; x < x0 + rw; ++x) row[static_cast<std::int64_t>(y) * w + x] = 1.0;
}

}  // namespace detail

// Stacks the ground-truth masks (input order preserved) and fills the
// remaining rows with random rectangles.
inline MaskSet pad_masks(const std::vector<Tensor>& gt, int n, Rng& rng) {
  if (static_cast<int>(gt.size()) > n)
    throw TooManyObjects("pad_masks: " + std::to_string(gt.size()) + " objects exceed N=" +
                         std::to_string(n));
  if (gt.empty() && n <= 0) throw InvalidArgument("pad_masks: N must be positive");
  int h = 0, w = 0;
  if (!gt.empty()) {
    if (gt[0].rank() != 2) throw InvalidArgument("pad_masks: masks must be HxW");
    h = gt[0].dim(0);
    w = gt[0].dim(1);
    for (const auto& m : gt)
      if (m.rank() != 2 || m.dim(0) != h || m.dim(1) != w)
        throw InvalidArgument("pad_masks: mask shape mismatch");
  } else {
    throw InvalidArgument("pad_masks: cannot infer resolution from empty list; use pad_masks(gt,n,h,w,rng)");
  }
  MaskSet out;
  out.data = Tensor::zeros({n, h, w});
  out.state = MaskState::Binary;
  for (std::size_t i = 0; i < gt.size(); ++i)
    std::copy(gt[i].data(), gt[i].data() + gt[i].size(),
              out.data.data() + static_cast<std::int64_t>(i) * h * w);
  for (int i = static_cast<int>(gt.size()); i < n; ++i)
    detail::random_rectangle_mask(out.data.data() + static_cast<std::int64_t>(i) * h * w, h, w, rng);
  return out;
}

// Overload for images with no annotated objects.
inline MaskSet pad_masks(const std::vector<Tensor>& gt, int n, int h, int w, Rng& rng) {
  if (!gt.empty()) return pad_masks(gt, n, rng);
  if (n <= 0 || h <= 0 || w <= 0) throw InvalidArgument("pad_masks: bad dimensions");
  MaskSet out;
  out.data = Tensor::zeros({n, h, w});
  out.state = MaskState::Binary;
  for (int i = 0; i < n; ++i)
    detail::random_rectangle_mask(out.data.data() + static_cast<std::int64_t>(i) * h * w, h, w, rng);
  return out;
}

// v -> (2v - 1) * b; outputs take exactly the values {-b, +b}.
inline MaskSet encode_binary(const MaskSet& m, double b) {
  if (m.state != MaskState::Binary) throw InvalidState("encode_binary: input must be binary");
  if (b <= 0.0) throw InvalidArgument("encode_binary: b must be positive");
  MaskSet out;
  out.data = Tensor(m.data.shape());
  out.state = MaskState::Encoded;
  out.b = b;
  const std::int64_t sz = m.data.size();
  for (std::int64_t i = 0; i < sz; ++i) {
    const double v = m.data[i];
    if (v != 0.0 && v != 1.0) throw InvalidState("encode_binary: non-binary value");
    out.data[i] = (2.0 * v - 1.0) * b;
  }
  return out;
}

// Object pixels draw uniform [0.5, 1], background uniform [0, 0.5), then the
// [0,1] code is rescaled to [-b, b].
inline MaskSet encode_shuffle(const MaskSet& m, double b, Rng& rng) {
  if (m.state != MaskState::Binary) throw InvalidState("encode_shuffle: input must be binary");
  if (b <= 0.0) throw InvalidArgument("encode_shuffle: b must be positive");
  MaskSet out;
  out.data = Tensor(m.data.shape());
  out.state = MaskState::Encoded;
  out.b = b;
  const std::int64_t sz = m.data.size();
  for (std::int64_t i = 0; i < sz; ++i) {
    const double v = m.data[i];
    if (v != 0.0 && v != 1.0) throw InvalidState("encode_shuffle: non-binary value");
    const double code = v == 1.0 ? rng.uniform(0.5, 1.0) : rng.uniform(0.0, 0.5);
    out.data[i] = (2.0 * code - 1.0) * b;
  }
  return out;
}

// Gaussian corruption at timestep t followed by a clamp back into [-b, b].
inline MaskSet corrupt(const MaskSet& m, int t, const Schedule& sched, Rng& rng) {
  if (m.state != MaskState::Encoded) throw InvalidState("corrupt: input must be encoded");
  if (t < 1 || t > sched.T) throw InvalidArgument("corrupt: t out of range [1, T]");
  Tensor eps(m.data.shape());
  const std::int64_t sz = eps.size();
  for (std::int64_t i = 0; i < sz; ++i) eps[i] = rng.normal();
  MaskSet out;
  out.data = q_sample(m.data, t, eps, sched);
  out.state = MaskState::Noisy;
  out.b = m.b;
  for (std::int64_t i = 0; i < sz; ++i) out.data[i] = std::clamp(out.data[i], -m.b, m.b);
  return out;
}

// Bilinear downsample to the feature resolution, threshold at zero. A row
// with no positive entries attends everywhere instead.
inline AttentionMask attention_mask(const Tensor& maps, int h, int w) {
  if (maps.rank() != 3) throw InvalidArgument("attention_mask: want NxHxW");
  if (h <= 0 || w <= 0) throw InvalidArgument("attention_mask: bad target resolution");
  const int n = maps.dim(0), sh = maps.dim(1), sw = maps.dim(2);
  AttentionMask out;
  out.n = n;
  out.h = h;
  out.w = w;
  out.data.assign(static_cast<std::size_t>(n) * h * w, 0);
  Tensor plane({sh, sw});
  for (int i = 0; i < n; ++i) {
    std::copy(maps.data() + static_cast<std::int64_t>(i) * sh * sw,
              maps.data() + static_cast<std::int64_t>(i + 1) * sh * sw, plane.data());
    Tensor small = (h == sh && w == sw) ? plane.clone() : bilinear_resize_2d(plane, h, w);
    bool any = false;
    for (int p = 0; p < h * w; ++p) {
      const bool on = small[p] > 0.0;
      out.data[static_cast<std::size_t>(i) * h * w + p] = on ? 1 : 0;
      any = any || on;
    }
    if (!any)
      std::fill(out.data.begin() + static_cast<std::ptrdiff_t>(i) * h * w,
                out.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * h * w, 1);
  }
  return out;
}

inline AttentionMask attention_mask(const MaskSet& m, int h, int w) {
  if (m.state == MaskState::Binary)
    throw InvalidState("attention_mask: binary masks are not attention inputs");
  return attention_mask(m.data, h, w);
}

}  // namespace diffseg
