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

#include <string>

#include "diffseg/nn.hpp"

namespace diffseg {

// Multi-resolution features. f32/f16/f8 feed the decoder layers; f_pixel
// (stride 4) is the embedding map masks are predicted against. All four maps
// share the channel count.
struct PyramidFeatures {
  Var f32, f16, f8, f_pixel;

  const Var& level(int i) const {
    switch (i % 3) {
      case 0: return f32;
      case 1: return f16;
      default: return f8;
    }
  }
};

// Small strided convolutional backbone down to stride 64, followed by a
// lateral-fusion decoder that rebuilds strides 32/16/8/4.
class PixelModule {
 public:
  PixelModule() = default;

  PixelModule(ParamStore& s, int channels, Rng& rng) : c_(channels) {
    if (channels < 8 || channels % 8 != 0)
      throw InvalidArgument("PixelModule: channels must be a positive multiple of 8");
    const int half = channels / 2;
    stem_ = nn::Conv2d(s, "pixel.stem", 3, half, 3, 2, 1, rng);
    down4_ = nn::Conv2d(s, "pixel.down4", half, channels, 3, 2, 1, rng);
    ref4_ = nn::Conv2d(s, "pixel.ref4", channels, channels, 3, 1, 1, rng);
    down8_ = nn::Conv2d(s, "pixel.down8", channels, channels, 3, 2, 1, rng);
    ref8_ = nn::Conv2d(s, "pixel.ref8", channels, channels, 3, 1, 1, rng);
    down16_ = nn::Conv2d(s, "pixel.down16", channels, channels, 3, 2, 1, rng);
    ref16_ = nn::Conv2d(s, "pixel.ref16", channels, channels, 3, 1, 1, rng);
    down32_ = nn::Conv2d(s, "pixel.down32", channels, channels, 3, 2, 1, rng);
    ref32_ = nn::Conv2d(s, "pixel.ref32", channels, channels, 3, 1, 1, rng);
    down64_ = nn::Conv2d(s, "pixel.down64", channels, channels, 3, 2, 1, rng);
    top_ = nn::Conv2d(s, "pixel.top", channels, channels, 1, 1, 0, rng);
    lat32_ = nn::Conv2d(s, "pixel.lat32", channels, channels, 1, 1, 0, rng);
    lat16_ = nn::Conv2d(s, "pixel.lat16", channels, channels, 1, 1, 0, rng);
    lat8_ = nn::Conv2d(s, "pixel.lat8", channels, channels, 1, 1, 0, rng);
    lat4_ = nn::Conv2d(s, "pixel.lat4", channels, channels, 1, 1, 0, rng);
    smooth32_ = nn::Conv2d(s, "pixel.smooth32", channels, channels, 3, 1, 1, rng);
    smooth16_ = nn::Conv2d(s, "pixel.smooth16", channels, channels, 3, 1, 1, rng);
    smooth8_ = nn::Conv2d(s, "pixel.smooth8", channels, channels, 3, 1, 1, rng);
    smooth4_ = nn::Conv2d(s, "pixel.smooth4", channels, channels, 3, 1, 1, rng);
  }

  int channels() const { return c_; }

  PyramidFeatures extract_features(const Binding& p, const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3)
      throw InvalidArgument("extract_features: want 3xHxW image, got " + image.shape_str());
    const int h = image.dim(1), w = image.dim(2);
    if (h % 32 != 0 || w % 32 != 0)
      throw InvalidArgument("extract_features: H and W must be multiples of 32");

    Var x = Var::constant(image);
    Var s2 = gelu(stem_(p, x));
    Var b4 = gelu(ref4_(p, gelu(down4_(p, s2))));
    Var b8 = gelu(ref8_(p, gelu(down8_(p, b4))));
    Var b16 = gelu(ref16_(p, gelu(down16_(p, b8))));
    Var b32 = gelu(ref32_(p, gelu(down32_(p, b16))));
    Var low = gelu(down64_(p, b32));

    Var t = top_(p, low);
    Var p32 = gelu(smooth32_(p, vadd(resize_nearest(t, h / 32, w / 32), lat32_(p, b32))));
    Var p16 = gelu(smooth16_(p, vadd(resize_nearest(p32, h / 16, w / 16), lat16_(p, b16))));
    Var p8 = gelu(smooth8_(p, vadd(resize_nearest(p16, h / 8, w / 8), lat8_(p, b8))));
    Var p4 = gelu(smooth4_(p, vadd(resize_nearest(p8, h / 4, w / 4), lat4_(p, b4))));
    return {p32, p16, p8, p4};
  }

 private:
  nn::Conv2d stem_, down4_, ref4_, down8_, ref8_, down16_, ref16_, down32_, ref32_, down64_;
  nn::Conv2d top_, lat32_, lat16_, lat8_, lat4_;
  nn::Conv2d smooth32_, smooth16_, smooth8_, smooth4_;
  int c_ = 0;
};

}  // namespace diffseg
