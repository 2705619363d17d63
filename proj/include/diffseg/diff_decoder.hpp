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
#include <vector>

#include "diffseg/interp.hpp"
#include "diffseg/mask_codec.hpp"
#include "diffseg/nn.hpp"
#include "diffseg/pixel_module.hpp"

namespace diffseg {

// Per-layer output: N mask logit maps at stride 4 plus N class score rows
// (index K is "no object").
struct Prediction {
  Var mask_logits;   // N x (mask_h * mask_w)
  Var class_logits;  // N x (K+1)
  int mask_h = 0, mask_w = 0;

  int count() const { return mask_logits.value().dim(0); }
  Tensor mask_logit_maps() const {
    return mask_logits.value().reshaped({count(), mask_h, mask_w});
  }
};

struct DecoderState {
  Var mask_features;        // N x C
  AttentionMask attention;  // at the resolution of the level this layer consumes
  int layer_index = 0;
};

// Stack of L masked-attention decoder layers conditioned on the timestep.
// Queries are the running mask features; each layer cross-attends into one
// pyramid level (cycling f32 -> f16 -> f8), self-attends across the N masks,
// and re-derives the next layer's attention from its own mask prediction.
class DiffDecoder {
 public:
  DiffDecoder() = default;

  DiffDecoder(ParamStore& s, int channels, int heads, int layers, int num_classes, Rng& rng)
      : c_(channels), heads_(heads), num_classes_(num_classes) {
    if (layers < 1) throw InvalidArgument("DiffDecoder: need at least one layer");
    if (channels % 4 != 0) throw InvalidArgument("DiffDecoder: channels must be a multiple of 4");
    layers_.reserve(static_cast<std::size_t>(layers));
    for (int i = 0; i < layers; ++i) {
      const std::string base = "decoder.layer" + std::to_string(i);
      Layer l;
      l.norm_cross = nn::LayerNorm(s, base + ".norm_cross", channels);
      l.cross = nn::MultiheadAttention(s, base + ".cross", channels, heads, rng);
      l.norm_self = nn::LayerNorm(s, base + ".norm_self", channels);
      l.self = nn::MultiheadAttention(s, base + ".self", channels, heads, rng);
      l.norm_ffn = nn::LayerNorm(s, base + ".norm_ffn", channels);
      l.ffn1 = nn::Linear(s, base + ".ffn1", channels, 4 * channels, rng);
      l.ffn2 = nn::Linear(s, base + ".ffn2", 4 * channels, channels, rng);
      layers_.push_back(l);
    }
    pred_norm_ = nn::LayerNorm(s, "decoder.pred_norm", channels);
    mask_mlp1_ = nn::Linear(s, "decoder.mask_mlp1", channels, channels, rng);
    mask_mlp2_ = nn::Linear(s, "decoder.mask_mlp2", channels, channels, rng);
    mask_mlp3_ = nn::Linear(s, "decoder.mask_mlp3", channels, channels, rng);
    class_head_ = nn::Linear(s, "decoder.class_head", channels, num_classes + 1, rng);
  }

  int layers() const { return static_cast<int>(layers_.size()); }
  int channels() const { return c_; }
  int num_classes() const { return num_classes_; }
  static int level_for_layer(int layer_index) { return layer_index % 3; }

  // Noisy-mask-weighted spatial average of the pixel embeddings. Masks are
  // resized to the embedding resolution first; weights are the masks shifted
  // to [0,1] and L1-normalized over space with eps = 1e-6.
  Var init_mask_features(const Var& f_pixel, const MaskSet& noisy) const {
    if (noisy.state == MaskState::Binary)
      throw InvalidState("init_mask_features: masks must be encoded or noisy");
    const int n = noisy.count();
    const int h = f_pixel.value().dim(1), w = f_pixel.value().dim(2);
    Tensor weights({n, h * w});
    Tensor plane({noisy.height(), noisy.width()});
    const double b = noisy.b;
    for (int i = 0; i < n; ++i) {
      std::copy(noisy.data.data() + static_cast<std::int64_t>(i) * plane.size(),
                noisy.data.data() + static_cast<std::int64_t>(i + 1) * plane.size(), plane.data());
      Tensor small = (noisy.height() == h && noisy.width() == w)
                         ? plane.clone()
                         : bilinear_resize_2d(plane, h, w);
      double sum = 0.0;
      for (int p = 0; p < h * w; ++p) {
        const double u = (std::clamp(small[p], -b, b) + b) / (2.0 * b);
        weights.at(i, p) = u;
        sum += u;
      }
      const double inv = 1.0 / (sum + 1e-6);
      for (int p = 0; p < h * w; ++p) weights.at(i, p) *= inv;
    }
    return matmul(Var::constant(weights), spatial_rows(f_pixel));
  }

  struct LayerOut {
    DecoderState state;
    Prediction pred;
  };

  // One decoder layer: masked cross-attention (queries carry a sinusoidal
  // time embedding, keys a 2-D positional encoding), self-attention, FFN,
  // all pre-norm residual. The returned state holds the attention for the
  // next layer, derived from this layer's mask prediction.
  LayerOut decoder_layer(const Binding& p, const DecoderState& st, const Var& level,
                         const Var& f_pixel, int t, int next_h, int next_w) const {
    if (st.layer_index < 0 || st.layer_index >= layers())
      throw InvalidArgument("decoder_layer: layer index out of range");
    const Layer& l = layers_[static_cast<std::size_t>(st.layer_index)];
    const int h = level.value().dim(1), w = level.value().dim(2);
    if (st.attention.h != h || st.attention.w != w ||
        st.attention.n != st.mask_features.value().dim(0))
      throw InvalidArgument("decoder_layer: attention mask does not match level resolution");

    Var x = st.mask_features;
    Var q = add_rowvec(l.norm_cross(p, x), Var::constant(nn::time_embedding(t, c_)));
    Var keys = spatial_rows(level);
    Var keys_pos = vadd(keys, Var::constant(nn::position_embedding_2d(h, w, c_)));
    Tensor bias = st.attention.bias();
    x = vadd(x, l.cross(p, q, keys_pos, keys, &bias));

    Var y = l.norm_self(p, x);
    x = vadd(x, l.self(p, y, y, y));

    Var z = l.norm_ffn(p, x);
    x = vadd(x, l.ffn2(p, gelu(l.ffn1(p, z))));

    LayerOut out;
    out.pred = predict(p, x, f_pixel);
    out.state.mask_features = x;
    out.state.layer_index = st.layer_index + 1;
    out.state.attention =
        attention_mask(out.pred.mask_logits.value().reshaped(
                           {out.pred.count(), out.pred.mask_h, out.pred.mask_w}),
                       next_h, next_w);
    return out;
  }

  // Mask logits as the channel dot product of MLP-mapped mask embeddings with
  // the pixel embeddings; class logits from a linear head.
  Prediction predict(const Binding& p, const Var& mask_features, const Var& f_pixel) const {
    Var h = pred_norm_(p, mask_features);
    Var emb = mask_mlp3_(p, gelu(mask_mlp2_(p, gelu(mask_mlp1_(p, h)))));
    Prediction pred;
    pred.mask_logits = matmul(emb, spatial_rows(f_pixel), false, true);
    pred.class_logits = class_head_(p, h);
    pred.mask_h = f_pixel.value().dim(1);
    pred.mask_w = f_pixel.value().dim(2);
    return pred;
  }

  // Full pass: aggregate initial mask features from the noisy masks, then run
  // all layers, emitting one Prediction per layer (the last is the output).
  std::vector<Prediction> run_decoder(const Binding& p, const PyramidFeatures& pyr,
                                      const MaskSet& noisy, int t) const {
    DecoderState st;
    st.mask_features = init_mask_features(pyr.f_pixel, noisy);
    st.layer_index = 0;
    st.attention =
        attention_mask(noisy.data, pyr.level(0).value().dim(1), pyr.level(0).value().dim(2));
    std::vector<Prediction> preds;
    preds.reserve(layers_.size());
    for (int i = 0; i < layers(); ++i) {
      const Var& level = pyr.level(level_for_layer(i));
      const Var& next = pyr.level(level_for_layer(i + 1));
      LayerOut out = decoder_layer(p, st, level, pyr.f_pixel, t, next.value().dim(1),
                                   next.value().dim(2));
      preds.push_back(out.pred);
      st = out.state;
    }
    return preds;
  }

 private:
  struct Layer {
    nn::LayerNorm norm_cross, norm_self, norm_ffn;
    nn::MultiheadAttention cross, self;
    nn::Linear ffn1, ffn2;
  };

  std::vector<Layer> layers_;
  nn::LayerNorm pred_norm_;
  nn::Linear mask_mlp1_, mask_mlp2_, mask_mlp3_, class_head_;
  int c_ = 0, heads_ = 0, num_classes_ = 0;
};

}  // namespace diffseg
