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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "diffseg/schedule.hpp"

using namespace diffseg;

TEST_CASE("cosine schedule boundary values and monotonicity") {
  Schedule s = make_schedule(1000);
  REQUIRE(s.alpha_bar[0] == 1.0);
  REQUIRE(s.alpha_bar[1000] <= 0.001);
  REQUIRE(s.alpha_bar[1000] > 0.0);
  for (int t = 0; t < 1000; ++t) {
    REQUIRE(s.alpha_bar[t + 1] < s.alpha_bar[t]);
  }

  // Independent re-evaluation of the closed form at the midpoint.
  const double offset = 0.008;
  auto f = [&](double t) {
    const double c = std::cos((t / 1000.0 + offset) / (1.0 + offset) * M_PI / 2.0);
    return c * c;
  };
  REQUIRE(s.alpha_bar[500] == Catch::Approx(f(500.0) / f(0.0)).epsilon(1e-12));

  REQUIRE(make_schedule(7).alpha_bar[0] == 1.0);
  REQUIRE_THROWS_AS(make_schedule(0), InvalidArgument);
  REQUIRE_THROWS_AS(make_schedule(-3), InvalidArgument);
}

TEST_CASE("q_sample boundaries") {
  Schedule s = make_schedule(1000);
  Rng rng(5);
  Tensor x0 = Tensor::randn({4, 4}, rng);
  Tensor eps = Tensor::randn({4, 4}, rng);

  Tensor at0 = q_sample(x0, 0, eps, s);
  for (std::int64_t i = 0; i < at0.size(); ++i) REQUIRE(at0[i] == x0[i]);

  Tensor atT = q_sample(x0, 1000, eps, s);
  const double bound = std::sqrt(s.alpha_bar[1000]) * x0.abs_max();
  for (std::int64_t i = 0; i < atT.size(); ++i)
    REQUIRE(std::abs(atT[i] - eps[i]) <= bound + 1e-15);

  REQUIRE_THROWS_AS(q_sample(x0, -1, eps, s), InvalidArgument);
  REQUIRE_THROWS_AS(q_sample(x0, 1001, eps, s), InvalidArgument);
  REQUIRE_THROWS_AS(q_sample(x0, 3, Tensor::zeros({2, 2}), s), InvalidArgument);
}

TEST_CASE("q_sample Monte-Carlo moments at three timesteps") {
  Schedule s = make_schedule(1000);
  Rng rng(99);
  const double c = 1.0;
  const int draws = 100000;
  for (int t : {250, 500, 750}) {
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double v = std::sqrt(s.alpha_bar[t]) * c + std::sqrt(1.0 - s.alpha_bar[t]) * rng.normal();
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / draws;
    const double var = sum2 / draws - mean * mean;
    REQUIRE(mean == Catch::Approx(std::sqrt(s.alpha_bar[t]) * c).epsilon(0.01));
    REQUIRE(var == Catch::Approx(1.0 - s.alpha_bar[t]).epsilon(0.01));
  }
}

TEST_CASE("time_pairs covers [T, -1] with the requested number of pairs") {
  auto p1 = time_pairs(1, 1000);
  REQUIRE(p1.size() == 1);
  REQUIRE(p1[0] == std::pair<int, int>(1000, -1));

  auto p2 = time_pairs(2, 1000);
  REQUIRE(p2.size() == 2);
  REQUIRE(p2[0] == std::pair<int, int>(1000, 500));
  REQUIRE(p2[1] == std::pair<int, int>(500, -1));

  auto p4 = time_pairs(4, 1000);
  REQUIRE(p4.size() == 4);
  REQUIRE(p4.front().first == 1000);
  REQUIRE(p4.back().second == -1);

  for (int steps : {1, 2, 3, 5, 8, 50, 999, 1000}) {
    auto ps = time_pairs(steps, 1000);
    REQUIRE(static_cast<int>(ps.size()) == steps);
    REQUIRE(ps.front().first == 1000);
    REQUIRE(ps.back().second == -1);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      REQUIRE(ps[i].second < ps[i].first);
      if (i) REQUIRE(ps[i].first == ps[i - 1].second);
    }
  }
  REQUIRE_THROWS_AS(time_pairs(0, 1000), InvalidArgument);
}

TEST_CASE("ddim_step boundary and exact-prediction identity") {
  Schedule s = make_schedule(1000);
  Rng rng(41);
  Tensor x0 = Tensor::randn({3, 5}, rng);
  Tensor eps = Tensor::randn({3, 5}, rng);

  // t_next = -1 returns the prediction exactly.
  Tensor m_t = q_sample(x0, 600, eps, s);
  Tensor fin = ddim_step(m_t, x0, 600, -1, s);
  for (std::int64_t i = 0; i < fin.size(); ++i) REQUIRE(fin[i] == x0[i]);

  // With an exact prediction the update reproduces q_sample at t_next.
  for (auto [t_now, t_next] : {std::pair{900, 450}, {450, 10}, {37, 3}, {813, 812}}) {
    Tensor noisy = q_sample(x0, t_now, eps, s);
    Tensor stepped = ddim_step(noisy, x0, t_now, t_next, s);
    Tensor expect = q_sample(x0, t_next, eps, s);
    for (std::int64_t i = 0; i < stepped.size(); ++i)
      REQUIRE(stepped[i] == Catch::Approx(expect[i]).margin(1e-9));
  }

  REQUIRE_THROWS_AS(ddim_step(m_t, x0, 500, 500, s), InvalidArgument);
  REQUIRE_THROWS_AS(ddim_step(m_t, x0, 500, 600, s), InvalidArgument);
}

TEST_CASE("chained single-step ddim recovers x0 from t=T") {
  Schedule s = make_schedule(64);
  Rng rng(43);
  Tensor x0 = Tensor::randn({2, 3}, rng);
  Tensor eps = Tensor::randn({2, 3}, rng);
  Tensor m = q_sample(x0, 64, eps, s);
  for (int t = 64; t >= 1; --t) m = ddim_step(m, x0, t, t - 1, s);
  for (std::int64_t i = 0; i < m.size(); ++i)
    REQUIRE(m[i] == Catch::Approx(x0[i]).margin(1e-8));
}
