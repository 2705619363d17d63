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

#include "diffseg/mask_codec.hpp"

using namespace diffseg;

namespace {

Tensor checker_mask(int h, int w) {
  Tensor m({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(y, x) = (x + y) % 2;
  return m;
}

}  // namespace

TEST_CASE("pad_masks keeps ground truth rows bit-exact and in order") {
  Rng rng(3);
  std::vector<Tensor> gt = {checker_mask(16, 16), Tensor::full({16, 16}, 1.0)};
  MaskSet padded = pad_masks(gt, 100, rng);
  REQUIRE(padded.count() == 100);
  REQUIRE(padded.state == MaskState::Binary);
  for (int i = 0; i < 2; ++i)
    for (int p = 0; p < 256; ++p)
      REQUIRE(padded.data[i * 256 + p] == gt[i][p]);

  // 98 padding rows, every one a rectangle with area fraction in [0.05, 0.30].
  for (int i = 2; i < 100; ++i) {
    double area = 0;
    for (int p = 0; p < 256; ++p) area += padded.data[i * 256 + p];
    const double frac = area / 256.0;
    REQUIRE(frac >= 0.05);
    REQUIRE(frac <= 0.30);
  }
}

TEST_CASE("pad_masks with no objects emits valid rectangles over many draws") {
  Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    MaskSet padded = pad_masks({}, 100, 64, 64, rng);
    for (int i = 0; i < 100; ++i) {
      // Verify the row is a single solid rectangle inside bounds.
      int y_lo = 64, y_hi = -1, x_lo = 64, x_hi = -1;
      double area = 0;
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          if (padded.data.at(i, y, x) != 0.0) {
            y_lo = std::min(y_lo, y); y_hi = std::max(y_hi, y);
            x_lo = std::min(x_lo, x); x_hi = std::max(x_hi, x);
            area += 1;
          }
      REQUIRE(y_hi >= y_lo);
      REQUIRE(area == (y_hi - y_lo + 1) * (x_hi - x_lo + 1));
      const double frac = area / 4096.0;
      REQUIRE(frac >= 0.05);
      REQUIRE(frac <= 0.30);
    }
  }

  // 1000 seeded draws of the area-fraction property at a small resolution.
  Rng rng2(18);
  for (int rep = 0; rep < 1000; ++rep) {
    MaskSet one = pad_masks({}, 1, 16, 16, rng2);
    double area = one.data.sum();
    REQUIRE(area / 256.0 >= 0.05);
    REQUIRE(area / 256.0 <= 0.30);
  }
}

TEST_CASE("pad_masks with len(gt) == N is a no-op and len(gt) > N throws") {
  Rng rng(5);
  std::vector<Tensor> gt = {checker_mask(8, 8), Tensor::full({8, 8}, 0.0)};
  MaskSet padded = pad_masks(gt, 2, rng);
  for (int p = 0; p < 64; ++p) {
    REQUIRE(padded.data[p] == gt[0][p]);
    REQUIRE(padded.data[64 + p] == gt[1][p]);
  }
  REQUIRE_THROWS_AS(pad_masks(gt, 1, rng), TooManyObjects);
}

TEST_CASE("encode_binary maps {0,1} to {-b,+b} and thresholding inverts it") {
  Rng rng(7);
  MaskSet m;
  m.data = checker_mask(8, 8).reshaped({1, 8, 8});
  m.state = MaskState::Binary;

  MaskSet e1 = encode_binary(m, 0.1);
  REQUIRE(e1.state == MaskState::Encoded);
  for (std::int64_t i = 0; i < 64; ++i) {
    REQUIRE(e1.data[i] == (m.data[i] == 1.0 ? 0.1 : -0.1));
    REQUIRE((e1.data[i] > 0.0 ? 1.0 : 0.0) == m.data[i]);
  }
  MaskSet e2 = encode_binary(m, 1.0);
  REQUIRE(e2.data[0] == -1.0);  // (0,0) is background in the checker pattern

  REQUIRE_THROWS_AS(encode_binary(e1, 0.1), InvalidState);
  MaskSet bad;
  bad.data = Tensor::full({1, 2, 2}, 0.5);
  bad.state = MaskState::Binary;
  REQUIRE_THROWS_AS(encode_binary(bad, 0.1), InvalidState);
}

TEST_CASE("encode_shuffle sign structure and distribution") {
  Rng rng(11);
  const double b = 0.1;
  MaskSet m;
  m.data = checker_mask(100, 100).reshaped({1, 100, 100});
  m.state = MaskState::Binary;
  MaskSet enc = encode_shuffle(m, b, rng);
  for (std::int64_t i = 0; i < enc.data.size(); ++i) {
    if (m.data[i] == 1.0) {
      REQUIRE(enc.data[i] >= 0.0);
      REQUIRE(enc.data[i] <= b);
    } else {
      REQUIRE(enc.data[i] < 0.0);
      REQUIRE(enc.data[i] >= -b);
    }
    REQUIRE((enc.data[i] > 0.0 || (enc.data[i] == 0.0 && m.data[i] == 1.0)) == (m.data[i] == 1.0));
  }

  // Kolmogorov-Smirnov: object-pixel values uniform on [0, b].
  std::vector<double> obj;
  Rng rng2(12);
  MaskSet ones;
  ones.data = Tensor::full({1, 320, 320}, 1.0);
  ones.state = MaskState::Binary;
  MaskSet enc2 = encode_shuffle(ones, b, rng2);
  obj.assign(enc2.data.data(), enc2.data.data() + enc2.data.size());
  std::sort(obj.begin(), obj.end());
  const double n = static_cast<double>(obj.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < obj.size(); ++i) {
    const double cdf = obj[i] / b;  // U[0, b]
    ks = std::max(ks, std::abs(cdf - (i + 1) / n));
    ks = std::max(ks, std::abs(cdf - i / n));
  }
  const double critical = 1.628 / std::sqrt(n);  // alpha = 0.01
  REQUIRE(obj.size() >= 100000);
  REQUIRE(ks < critical);
}

TEST_CASE("corrupt clamps to [-b, b] and matches the noise model") {
  Schedule s = make_schedule(1000, ScheduleKind::Cosine, 0.1);
  Rng rng(13);
  MaskSet m;
  m.data = checker_mask(64, 64).reshaped({1, 64, 64});
  m.state = MaskState::Binary;
  MaskSet enc = encode_binary(m, 0.1);

  for (int t : {1, 250, 500, 1000}) {
    Rng r(1000 + t);
    MaskSet noisy = corrupt(enc, t, s, r);
    REQUIRE(noisy.state == MaskState::Noisy);
    for (std::int64_t i = 0; i < noisy.data.size(); ++i) {
      REQUIRE(noisy.data[i] <= 0.1);
      REQUIRE(noisy.data[i] >= -0.1);
    }
  }

  // t=1: mean absolute deviation stays within the near-boundary bound
  // sqrt(1-a1)*E|eps| + (1-sqrt(a1))*b, and well below b.
  Rng r1(77);
  MaskSet near = corrupt(enc, 1, s, r1);
  double mad = 0.0;
  for (std::int64_t i = 0; i < near.data.size(); ++i)
    mad += std::abs(near.data[i] - enc.data[i]);
  mad /= static_cast<double>(near.data.size());
  REQUIRE(mad <= std::sqrt(1.0 - s.alpha_bar[1]) * 0.8 +
                     (1.0 - std::sqrt(s.alpha_bar[1])) * 0.1);
  REQUIRE(mad <= 0.1 / 10.0);

  // t=T: sign agreement with the input is a coin flip.
  Rng r2(78);
  MaskSet big;
  big.data = Tensor::zeros({25, 64, 64});
  for (std::int64_t i = 0; i < big.data.size(); ++i) big.data[i] = (i % 2 == 0) ? 1.0 : 0.0;
  big.state = MaskState::Binary;
  MaskSet bigenc = encode_binary(big, 0.1);
  MaskSet full = corrupt(bigenc, 1000, s, r2);
  std::int64_t agree = 0;
  for (std::int64_t i = 0; i < full.data.size(); ++i)
    if ((full.data[i] > 0) == (bigenc.data[i] > 0)) ++agree;
  const double frac = static_cast<double>(agree) / static_cast<double>(full.data.size());
  REQUIRE(full.data.size() >= 100000);
  REQUIRE(std::abs(frac - 0.5) < 0.01);

  REQUIRE_THROWS_AS(corrupt(enc, 0, s, rng), InvalidArgument);
  REQUIRE_THROWS_AS(corrupt(enc, 1001, s, rng), InvalidArgument);
  REQUIRE_THROWS_AS(corrupt(m, 5, s, rng), InvalidState);
}

TEST_CASE("attention_mask thresholds, falls back on empty rows") {
  const double b = 0.1;

  Tensor allpos = Tensor::full({1, 8, 8}, b);
  AttentionMask a1 = attention_mask(allpos, 4, 4);
  for (int p = 0; p < 16; ++p) REQUIRE(a1.data[p] == 1);

  Tensor allneg = Tensor::full({1, 8, 8}, -b);
  AttentionMask a2 = attention_mask(allneg, 4, 4);
  for (int p = 0; p < 16; ++p) REQUIRE(a2.data[p] == 1);  // empty-row fallback

  // Half-plane at 64x64 downsampled to 16x16 lands exactly on the half-plane.
  Tensor half({1, 64, 64});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) half.at(0, y, x) = x >= 32 ? b : -b;
  AttentionMask a3 = attention_mask(half, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) REQUIRE(a3.at(0, y, x) == (x >= 8));

  // Brute-force bilinear downsample oracle on a random map.
  Rng rng(21);
  Tensor noise = Tensor::randn({2, 12, 12}, rng);
  AttentionMask a4 = attention_mask(noise, 5, 7);
  for (int i = 0; i < 2; ++i) {
    bool any = false;
    std::vector<std::uint8_t> expect(35);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 7; ++x) {
        const double sy = (y + 0.5) * 12.0 / 5.0 - 0.5;
        const double sx = (x + 0.5) * 12.0 / 7.0 - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, 11);
        const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, 11);
        const int y1 = std::min(y0 + 1, 11), x1 = std::min(x0 + 1, 11);
        const double fy = std::clamp(sy - y0, 0.0, 1.0), fx = std::clamp(sx - x0, 0.0, 1.0);
        const double v = noise.at(i, y0, x0) * (1 - fy) * (1 - fx) +
                         noise.at(i, y0, x1) * (1 - fy) * fx +
                         noise.at(i, y1, x0) * fy * (1 - fx) + noise.at(i, y1, x1) * fy * fx;
        expect[y * 7 + x] = v > 0 ? 1 : 0;
        any = any || v > 0;
      }
    REQUIRE(any);  // generic random map: fallback not exercised here
    for (int p = 0; p < 35; ++p) REQUIRE(a4.data[i * 35 + p] == expect[p]);
  }
}

TEST_CASE("state machine rejects out-of-order transitions") {
  Rng rng(31);
  Schedule s = make_schedule(100, ScheduleKind::Cosine, 0.1);
  MaskSet m;
  m.data = checker_mask(8, 8).reshaped({1, 8, 8});
  m.state = MaskState::Binary;
  MaskSet enc = encode_binary(m, 0.1);
  MaskSet noisy = corrupt(enc, 50, s, rng);
  REQUIRE_THROWS_AS(encode_binary(noisy, 0.1), InvalidState);
  REQUIRE_THROWS_AS(encode_shuffle(noisy, 0.1, rng), InvalidState);
  REQUIRE_THROWS_AS(corrupt(noisy, 50, s, rng), InvalidState);
  REQUIRE_THROWS_AS(attention_mask(m, 4, 4), InvalidState);
  // Noisy masks are valid attention inputs.
  AttentionMask att = attention_mask(noisy, 4, 4);
  REQUIRE(att.n == 1);
}
