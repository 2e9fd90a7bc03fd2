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

#pragma once

// Hiformer layer: per-token, per-head queries attend over keys and values
// produced by a global composite projection of all K tokens at once, so every
// key may depend on every token.

#include <vector>

#include "hhft/encoder.hpp"

namespace hhft {

struct HiformerConfig {
  int n2 = 1;
  int d_h = 8;  // per-head projection width
  int n_h = 4;  // head count

  void validate() const;
};

// Per layer:
//   wq        [K x d x (n_h*d_h)]   per-token queries, head-major columns
//   wk_hat[h] [(K*d) x (K*d_h)]     composite key projection of head h
//   wv_hat[h] [(K*d) x (K*d_h)]     composite value projection of head h
//   wo        [K x (n_h*d_h) x d]   per-token output projection
//   norms and FFN as in the encoder, one instance per token.
struct HiformerLayerLayout {
  std::size_t wq, wo;
  std::vector<std::size_t> wk_hat, wv_hat;
  std::size_t ln1_g, ln1_b, ln2_g, ln2_b;
  std::size_t w1, b1, w2, b2;
};

template <class T>
struct HiformerLayerVars {
  Var<T> wq, wo;
  std::vector<Var<T>> wk_hat, wv_hat;
  Var<T> ln1_g, ln1_b, ln2_g, ln2_b;
  Var<T> w1, b1, w2, b2;
};

template <class T>
HiformerLayerLayout add_hiformer_layer(ParamStore<T>& store, const std::string& prefix, std::size_t tokens,
                                       const EncoderConfig& encoder, const HiformerConfig& config);

template <class T>
HiformerLayerVars<T> bind_layer(const HiformerLayerLayout& layout, const std::vector<Var<T>>& params);

// Flattens each record's tokens to a (K*d)-vector, multiplies by w_hat and
// splits the result into K segments of width d_h: [B x K x d] -> [B x K x d_h].
template <class T>
Var<T> composite_project(Var<T> h, Var<T> w_hat);

// One full Hiformer layer (attention, residuals, norms and per-token FFN).
template <class T>
Var<T> hiformer_attention(Var<T> h, const HiformerLayerVars<T>& p, const EncoderConfig& encoder,
                          const HiformerConfig& config, Tensor<T>* probs = nullptr);

template <class T>
Var<T> hiformer_forward(Var<T> h, const std::vector<HiformerLayerVars<T>>& layers, const EncoderConfig& encoder,
                        const HiformerConfig& config, std::vector<Tensor<T>>* probs = nullptr);

}  // namespace hhft
