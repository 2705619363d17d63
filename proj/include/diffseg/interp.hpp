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

#include "diffseg/tensor.hpp"

namespace diffseg {

// Bilinear resample of an H x W map to h2 x w2. Sample points are cell
// centers (the half-pixel convention), clamped at the borders.
inline Tensor bilinear_resize_2d(const Tensor& src, int h2, int w2) {
  if (src.rank() != 2) throw InvalidArgument("bilinear_resize_2d: want HxW");
  const int h = src.dim(0), w = src.dim(1);
  Tensor out({h2, w2});
  for (int y = 0; y < h2; ++y) {
    const double sy = (y + 0.5) * h / h2 - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = std::clamp(sy - y0, 0.0, 1.0);
    for (int x = 0; x < w2; ++x) {
      const double sx = (x + 0.5) * w / w2 - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double fx = std::clamp(sx - x0, 0.0, 1.0);
      const double top = src.at(y0, x0) * (1 - fx) + src.at(y0, x1) * fx;
      const double bot = src.at(y1, x0) * (1 - fx) + src.at(y1, x1) * fx;
      out.at(y, x) = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

// Channel-wise bilinear resample of a C x H x W map.
inline Tensor bilinear_resize_chw(const Tensor& src, int h2, int w2) {
  if (src.rank() != 3) throw InvalidArgument("bilinear_resize_chw: want CxHxW");
  const int c = src.dim(0);
  Tensor out({c, h2, w2});
  for (int ch = 0; ch < c; ++ch) {
    Tensor plane = src.reshaped({c, src.dim(1) * src.dim(2)});
    Tensor view({src.dim(1), src.dim(2)});
    std::copy(plane.data() + static_cast<std::int64_t>(ch) * view.size(),
              plane.data() + static_cast<std::int64_t>(ch + 1) * view.size(), view.data());
    Tensor r = bilinear_resize_2d(view, h2, w2);
    std::copy(r.data(), r.data() + r.size(),
              out.data() + static_cast<std::int64_t>(ch) * h2 * w2);
  }
  return out;
}

// Box-average downsample of an H x W map (exact mean over source cells
// covered by each destination cell; handles non-integer ratios).
inline Tensor area_downsample_2d(const Tensor& src, int h2, int w2) {
  if (src.rank() != 2) throw InvalidArgument("area_downsample_2d: want HxW");
  const int h = src.dim(0), w = src.dim(1);
  Tensor out({h2, w2});
  for (int y = 0; y < h2; ++y) {
    const double y_lo = static_cast<double>(y) * h / h2;
    const double y_hi = static_cast<double>(y + 1) * h / h2;
    for (int x = 0; x < w2; ++x) {
      const double x_lo = static_cast<double>(x) * w / w2;
      const double x_hi = static_cast<double>(x + 1) * w / w2;
      double acc = 0.0, area = 0.0;
      for (int iy = static_cast<int>(std::floor(y_lo)); iy < static_cast<int>(std::ceil(y_hi));
           ++iy) {
        const double cy = std::min<double>(iy + 1, y_hi) - std::max<double>(iy, y_lo);
        for (int ix = static_cast<int>(std::floor(x_lo)); ix < static_cast<int>(std::ceil(x_hi));
             ++ix) {
          const double cx = std::min<double>(ix + 1, x_hi) - std::max<double>(ix, x_lo);
          acc += src.at(std::min(iy, h - 1), std::min(ix, w - 1)) * cy * cx;
          area += cy * cx;
        }
      }
      out.at(y, x) = acc / area;
    }
  }
  return out;
}

}  // namespace diffseg
