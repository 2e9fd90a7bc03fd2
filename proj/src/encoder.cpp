// Copyright 2026 The hhft-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hhft/encoder.hpp"

#include <string>

namespace hhft {
namespace {

template <class T>
void check_groups(Var<T> h, Var<T> w, const char* what) {
  if (h.shape().size() != 3 || w.shape().size() != 3) return;
  const std::size_t g = w.dim(0), k = h.dim(1);
  if (g != 1 && g != k)
    throw ConfigError(std::string(what) + ": parameters have " + std::to_string(g) + " block entries but the input has " +
                      std::to_string(k) + " tokens");
}

}  // namespace

void EncoderConfig::validate() const {
  if (n1 < 0) throw ConfigError("encoder n1 must be >= 0");
  if (d < 1 || d_ffn < 1 || n_heads < 1) throw ConfigError("encoder d, d_ffn and n_heads must be >= 1");
  if (d % n_heads != 0)
    throw ConfigError("encoder token dim d=" + std::to_string(d) + " is not divisible by n_heads=" +
                      std::to_string(n_heads));
  if (!(ln_eps > 0)) throw ConfigError("layer norm eps must be > 0");
}

template <class T>
EncoderLayerLayout add_encoder_layer(ParamStore<T>& store, const std::string& prefix, std::size_t groups,
                                     const EncoderConfig& c) {
  const auto d = static_cast<std::size_t>(c.d), f = static_cast<std::size_t>(c.d_ffn), g = groups;
  auto weight = [&](const char* name, std::size_t in, std::size_t out, bool residual) {
    return store.add({prefix + name, ParamGroup::kWeight, in, out, residual}, {g, in, out});
  };
  EncoderLayerLayout l{};
  l.wq = weight(".wq", d, d, false);
  l.wk = weight(".wk", d, d, false);
  l.wv = weight(".wv", d, d, false);
  l.wo = weight(".wo", d, d, true);
  l.ln1_g = store.add({prefix + ".ln1_g", ParamGroup::kNormGain, d, d, false}, {g, d});
  l.ln1_b = store.add({prefix + ".ln1_b", ParamGroup::kNormBias, d, d, false}, {g, d});
  l.ln2_g = store.add({prefix + ".ln2_g", ParamGroup::kNormGain, d, d, false}, {g, d});
  l.ln2_b = store.add({prefix + ".ln2_b", ParamGroup::kNormBias, d, d, false}, {g, d});
  l.w1 = weight(".w1", d, f, false);
  l.b1 = store.add({prefix + ".b1", ParamGroup::kBias, d, f, false}, {g, f});
  l.w2 = weight(".w2", f, d, true);
  l.b2 = store.add({prefix + ".b2", ParamGroup::kBias, f, d, true}, {g, d});
  return l;
}

template <class T>
EncoderLayerVars<T> bind_layer(const EncoderLayerLayout& l, const std::vector<Var<T>>& p) {
  return {p[l.wq],    p[l.wk],    p[l.wv], p[l.wo], p[l.ln1_g], p[l.ln1_b],
          p[l.ln2_g], p[l.ln2_b], p[l.w1], p[l.b1], p[l.w2],    p[l.b2]};
}

template <class T>
QkvResult<T> qkv_project(Var<T> h, Var<T> wq, Var<T> wk, Var<T> wv) {
  for (Var<T> w : {wq, wk, wv}) check_groups(h, w, "qkv_project");
  return {blockwise_linear(h, wq), blockwise_linear(h, wk), blockwise_linear(h, wv)};
}

template <class T>
Var<T> multi_head_attention(Var<T> q, Var<T> k, Var<T> v, Var<T> wo, int n_heads, Tensor<T>* probs) {
  return blockwise_linear(attention(q, k, v, static_cast<std::size_t>(n_heads), probs), wo);
}

template <class T>
Var<T> block_ffn(Var<T> x, Var<T> w1, Var<T> b1, Var<T> w2, Var<T> b2) {
  check_groups(x, w1, "block_ffn");
  return blockwise_linear(relu(blockwise_linear(x, w1, b1)), w2, b2);
}

template <class T>
Var<T> encoder_layer(Var<T> h, const EncoderLayerVars<T>& p, const EncoderConfig& c, Tensor<T>* probs) {
  const T eps = static_cast<T>(c.ln_eps);
  if (c.norm == NormPlacement::kPre) {
    Var<T> x = layer_norm(h, p.ln1_g, p.ln1_b, eps);
    auto qkv = qkv_project(x, p.wq, p.wk, p.wv);
    Var<T> h1 = add(h, multi_head_attention(qkv.q, qkv.k, qkv.v, p.wo, c.n_heads, probs));
    Var<T> x2 = layer_norm(h1, p.ln2_g, p.ln2_b, eps);
    return add(h1, block_ffn(x2, p.w1, p.b1, p.w2, p.b2));
  }
  auto qkv = qkv_project(h, p.wq, p.wk, p.wv);
  Var<T> h1 = layer_norm(add(h, multi_head_attention(qkv.q, qkv.k, qkv.v, p.wo, c.n_heads, probs)), p.ln1_g,
                         p.ln1_b, eps);
  return layer_norm(add(h1, block_ffn(h1, p.w1, p.b1, p.w2, p.b2)), p.ln2_g, p.ln2_b, eps);
}

template <class T>
Var<T> encoder_forward(Var<T> h, const std::vector<EncoderLayerVars<T>>& layers, const EncoderConfig& c,
                       std::vector<Tensor<T>>* probs) {
  for (const auto& layer : layers) {
    Tensor<T> p;
    h = encoder_layer(h, layer, c, probs ? &p : nullptr);
    if (probs) probs->push_back(std::move(p));
  }
  return h;
}

#define HHFT_INSTANTIATE(T)                                                                                      \
  template EncoderLayerLayout add_encoder_layer<T>(ParamStore<T>&, const std::string&, std::size_t,             \
                                                   const EncoderConfig&);                                       \
  template EncoderLayerVars<T> bind_layer<T>(const EncoderLayerLayout&, const std::vector<Var<T>>&);            \
  template QkvResult<T> qkv_project<T>(Var<T>, Var<T>, Var<T>, Var<T>);                                          \
  template Var<T> multi_head_attention<T>(Var<T>, Var<T>, Var<T>, Var<T>, int, Tensor<T>*);                     \
  template Var<T> block_ffn<T>(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>);                                         \
  template Var<T> encoder_layer<T>(Var<T>, const EncoderLayerVars<T>&, const EncoderConfig&, Tensor<T>*);       \
  template Var<T> encoder_forward<T>(Var<T>, const std::vector<EncoderLayerVars<T>>&, const EncoderConfig&,     \
                                     std::vector<Tensor<T>>*);

HHFT_INSTANTIATE(float)
HHFT_INSTANTIATE(double)
#undef HHFT_INSTANTIATE

}  // namespace hhft
