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

#include "hhft/hiformer.hpp"

#include <string>

namespace hhft {

void HiformerConfig::validate() const {
  if (n2 < 0) throw ConfigError("hiformer n2 must be >= 0");
  if (d_h < 1 || n_h < 1) throw ConfigError("hiformer d_h and n_h must be >= 1");
}

template <class T>
HiformerLayerLayout add_hiformer_layer(ParamStore<T>& store, const std::string& prefix, std::size_t tokens,
                                       const EncoderConfig& enc, const HiformerConfig& c) {
  const auto d = static_cast<std::size_t>(enc.d), f = static_cast<std::size_t>(enc.d_ffn);
  const auto dh = static_cast<std::size_t>(c.d_h), nh = static_cast<std::size_t>(c.n_h), k = tokens;
  HiformerLayerLayout l{};
  l.wq = store.add({prefix + ".wq", ParamGroup::kWeight, d, nh * dh, false}, {k, d, nh * dh});
  for (std::size_t h = 0; h < nh; ++h) {
    const std::string hs = std::to_string(h);
    l.wk_hat.push_back(store.add({prefix + ".wk_hat" + hs, ParamGroup::kWeight, k * d, k * dh, false}, {k * d, k * dh}));
    l.wv_hat.push_back(store.add({prefix + ".wv_hat" + hs, ParamGroup::kWeight, k * d, k * dh, false}, {k * d, k * dh}));
  }
  l.wo = store.add({prefix + ".wo", ParamGroup::kWeight, nh * dh, d, true}, {k, nh * dh, d});
  l.ln1_g = store.add({prefix + ".ln1_g", ParamGroup::kNormGain, d, d, false}, {k, d});
  l.ln1_b = store.add({prefix + ".ln1_b", ParamGroup::kNormBias, d, d, false}, {k, d});
  l.ln2_g = store.add({prefix + ".ln2_g", ParamGroup::kNormGain, d, d, false}, {k, d});
  l.ln2_b = store.add({prefix + ".ln2_b", ParamGroup::kNormBias, d, d, false}, {k, d});
  l.w1 = store.add({prefix + ".w1", ParamGroup::kWeight, d, f, false}, {k, d, f});
  l.b1 = store.add({prefix + ".b1", ParamGroup::kBias, d, f, false}, {k, f});
  l.w2 = store.add({prefix + ".w2", ParamGroup::kWeight, f, d, true}, {k, f, d});
  l.b2 = store.add({prefix + ".b2", ParamGroup::kBias, f, d, true}, {k, d});
  return l;
}

template <class T>
HiformerLayerVars<T> bind_layer(const HiformerLayerLayout& l, const std::vector<Var<T>>& p) {
  HiformerLayerVars<T> v;
  v.wq = p[l.wq];
  v.wo = p[l.wo];
  for (auto i : l.wk_hat) v.wk_hat.push_back(p[i]);
  for (auto i : l.wv_hat) v.wv_hat.push_back(p[i]);
  v.ln1_g = p[l.ln1_g];
  v.ln1_b = p[l.ln1_b];
  v.ln2_g = p[l.ln2_g];
  v.ln2_b = p[l.ln2_b];
  v.w1 = p[l.w1];
  v.b1 = p[l.b1];
  v.w2 = p[l.w2];
  v.b2 = p[l.b2];
  return v;
}

template <class T>
Var<T> composite_project(Var<T> h, Var<T> w_hat) {
  const Shape& hs = h.shape();
  const Shape& ws = w_hat.shape();
  if (hs.size() != 3 || ws.size() != 2 || ws[0] != hs[1] * hs[2] || ws[1] % hs[1] != 0)
    throw ConfigError("composite_project: projection " + shape_str(ws) + " does not fit tokens " + shape_str(hs) +
                      " (expected [(K*d) x (K*d_h)])");
  const std::size_t b = hs[0], k = hs[1], d = hs[2], dh = ws[1] / k;
  Var<T> flat = reshape(h, Shape{b, k * d});
  return reshape(matmul(flat, w_hat), Shape{b, k, dh});
}

namespace {

template <class T>
Var<T> attention_branch(Var<T> x, const HiformerLayerVars<T>& p, const HiformerConfig& c, Tensor<T>* probs) {
  if (p.wk_hat.size() != static_cast<std::size_t>(c.n_h) || p.wv_hat.size() != static_cast<std::size_t>(c.n_h))
    throw ConfigError("hiformer layer has " + std::to_string(p.wk_hat.size()) + " composite heads, config says " +
                      std::to_string(c.n_h));
  Var<T> q = blockwise_linear(x, p.wq);
  std::vector<Var<T>> keys, values;
  for (int h = 0; h < c.n_h; ++h) {
    keys.push_back(composite_project(x, p.wk_hat[static_cast<std::size_t>(h)]));
    values.push_back(composite_project(x, p.wv_hat[static_cast<std::size_t>(h)]));
  }
  Var<T> k = keys.size() == 1 ? keys[0] : concat(std::span<const Var<T>>(keys), 2);
  Var<T> v = values.size() == 1 ? values[0] : concat(std::span<const Var<T>>(values), 2);
  return blockwise_linear(attention(q, k, v, static_cast<std::size_t>(c.n_h), probs), p.wo);
}

}  // namespace

template <class T>
Var<T> hiformer_attention(Var<T> h, const HiformerLayerVars<T>& p, const EncoderConfig& enc, const HiformerConfig& c,
                          Tensor<T>* probs) {
  const T eps = static_cast<T>(enc.ln_eps);
  if (enc.norm == NormPlacement::kPre) {
    Var<T> x = layer_norm(h, p.ln1_g, p.ln1_b, eps);
    Var<T> h1 = add(h, attention_branch(x, p, c, probs));
    Var<T> x2 = layer_norm(h1, p.ln2_g, p.ln2_b, eps);
    return add(h1, block_ffn(x2, p.w1, p.b1, p.w2, p.b2));
  }
  Var<T> h1 = layer_norm(add(h, attention_branch(h, p, c, probs)), p.ln1_g, p.ln1_b, eps);
  return layer_norm(add(h1, block_ffn(h1, p.w1, p.b1, p.w2, p.b2)), p.ln2_g, p.ln2_b, eps);
}

template <class T>
Var<T> hiformer_forward(Var<T> h, const std::vector<HiformerLayerVars<T>>& layers, const EncoderConfig& enc,
                        const HiformerConfig& c, std::vector<Tensor<T>>* probs) {
  for (const auto& layer : layers) {
    Tensor<T> p;
    h = hiformer_attention(h, layer, enc, c, probs ? &p : nullptr);
    if (probs) probs->push_back(std::move(p));
  }
  return h;
}

#define HHFT_INSTANTIATE(T)                                                                                  \
  template HiformerLayerLayout add_hiformer_layer<T>(ParamStore<T>&, const std::string&, std::size_t,       \
                                                     const EncoderConfig&, const HiformerConfig&);          \
  template HiformerLayerVars<T> bind_layer<T>(const HiformerLayerLayout&, const std::vector<Var<T>>&);      \
  template Var<T> composite_project<T>(Var<T>, Var<T>);                                                      \
  template Var<T> hiformer_attention<T>(Var<T>, const HiformerLayerVars<T>&, const EncoderConfig&,          \
                                        const HiformerConfig&, Tensor<T>*);                                 \
  template Var<T> hiformer_forward<T>(Var<T>, const std::vector<HiformerLayerVars<T>>&, const EncoderConfig&, \
                                      const HiformerConfig&, std::vector<Tensor<T>>*);

HHFT_INSTANTIATE(float)
HHFT_INSTANTIATE(double)
#undef HHFT_INSTANTIATE

}  // namespace hhft
