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
#include <utility>
#include <vector>

#include "diffseg/errors.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

// Diffusion timetable: cumulative signal retention alpha_bar[0..T] plus the
// mask value scale b. alpha_bar decreases strictly from 1 at t=0 to ~0 at t=T.
struct Schedule {
  int T = 0;
  std::vector<double> alpha_bar;  // length T+1
  double b = 0.1;

  double alpha(int t) const {
    if (t == -1) return 1.0;  // convention for the final denoising step
    if (t < 0 || t > T) throw InvalidArgument("Schedule::alpha: t out of range");
    return alpha_bar[static_cast<std::size_t>(t)];
  }
};

enum class ScheduleKind { Cosine };

// Cosine schedule, renormalized so alpha_bar[0] is exactly 1.
inline Schedule make_schedule(int T, ScheduleKind kind = ScheduleKind::Cosine, double b = 0.1) {
  if (T < 1) throw InvalidArgument("make_schedule: T must be >= 1");
  if (b <= 0.0) throw InvalidArgument("make_schedule: b must be positive");
  if (kind != ScheduleKind::Cosine) throw InvalidArgument("make_schedule: unknown schedule kind");
  Schedule s;
  s.T = T;
  s.b = b;
  s.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
  const double offset = 0.008;
  auto f = [&](double t) {
    const double u = (t / T + offset) / (1.0 + offset) * (M_PI / 2.0);
    const double c = std::cos(u);
    return c * c;
  };
  const double f0 = f(0.0);
  for (int t = 0; t <= T; ++t) s.alpha_bar[static_cast<std::size_t>(t)] = f(t) / f0;
  s.alpha_bar[0] = 1.0;
  return s;
}

// Forward corruption: sqrt(a)*x0 + sqrt(1-a)*eps, elementwise. No clamping.
inline Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const Schedule& sched) {
  if (!x0.same_shape(eps))
    throw InvalidArgument("q_sample: x0/eps shape mismatch " + x0.shape_str() + " vs " +
                          eps.shape_str());
  if (t < 0 || t > sched.T) throw InvalidArgument("q_sample: t out of range");
  const double a = sched.alpha(t);
  const double sa = std::sqrt(a);
  const double sn = std::sqrt(1.0 - a);
  Tensor out(x0.shape());
  const std::int64_t n = x0.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = sa * x0[i] + sn * eps[i];
  return out;
}

// steps+1 grid points evenly spaced from T down to -1 inclusive, returned as
// adjacent (t_now, t_next) pairs. t_next == -1 on the last pair means "emit
// the final prediction, do not re-noise".
inline std::vector<std::pair<int, int>> time_pairs(int steps, int T) {
  if (steps < 1) throw InvalidArgument("time_pairs: steps must be >= 1");
  if (steps > T) throw InvalidArgument("time_pairs: steps must be <= T");
  std::vector<int> grid(static_cast<std::size_t>(steps) + 1);
  grid[0] = T;
  for (int i = 1; i <= steps; ++i) {
    const double g = T - static_cast<double>(i) * (T + 1) / steps;
    int v = static_cast<int>(std::lround(g));
    v = std::min(v, grid[static_cast<std::size_t>(i) - 1] - 1);  // keep strictly decreasing
    grid[static_cast<std::size_t>(i)] = std::max(v, -1);
  }
  grid[static_cast<std::size_t>(steps)] = -1;
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i)
    pairs.emplace_back(grid[static_cast<std::size_t>(i)], grid[static_cast<std::size_t>(i) + 1]);
  return pairs;
}

// Deterministic (eta = 0) reverse update: estimate the noise from the model's
// clean-sample prediction at t_now, then re-noise it to t_next.
inline Tensor ddim_step(const Tensor& m_t, const Tensor& m_pred, int t_now, int t_next,
                        const Schedule& sched) {
  if (!m_t.same_shape(m_pred)) throw InvalidArgument("ddim_step: shape mismatch");
  if (t_now < 0 || t_now > sched.T) throw InvalidArgument("ddim_step: t_now out of range");
  if (t_next >= t_now || t_next < -1) throw InvalidArgument("ddim_step: need -1 <= t_next < t_now");
  const double a_now = sched.alpha(t_now);
  const double a_next = sched.alpha(t_next);
  const double sa_now = std::sqrt(a_now);
  const double sn_now = std::sqrt(1.0 - a_now);
  const double sa_next = std::sqrt(a_next);
  const double sn_next = std::sqrt(1.0 - a_next);
  Tensor out(m_t.shape());
  const std::int64_t n = m_t.size();
  if (sn_now == 0.0) {
    // t_now = 0: the prediction is already clean.
    for (std::int64_t i = 0; i < n; ++i) out[i] = m_pred[i];
    return out;
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const double eps_hat = (m_t[i] - sa_now * m_pred[i]) / sn_now;
    out[i] = sa_next * m_pred[i] + sn_next * eps_hat;
  }
  return out;
}

}  // namespace diffseg
