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

// Heterogeneous transformer encoder: each block owns its Q/K/V/O projections,
// layer norms and FFN while the attention computation over the K tokens is
// shared. A shared-parameter encoder is the same code with one parameter
// group (G = 1) broadcast to every token.

#include <vector>

#include "hhft/ops.hpp"
#include "hhft/params.hpp"

namespace hhft {

enum class NormPlacement { kPre, kPost };

struct EncoderConfig {
  int n1 = 1;
  int d = 32;
  int d_ffn = 32;
  int n_heads = 4;
  NormPlacement norm = NormPlacement::kPre;
  double ln_eps = 1e-5;

  void validate() const;
};

// Parameter indices of one encoder layer. Every tensor has a leading group
// axis G: [G x d x d] projections, [G x d] norms, [G x d x d_ffn] / [G x d_ffn]
// / [G x d_ffn x d] / [G x d] FFN.
struct EncoderLayerLayout {
  std::size_t wq, wk, wv, wo;
  std::size_t ln1_g, ln1_b, ln2_g, ln2_b;
  std::size_t w1, b1, w2, b2;
};

template <class T>
struct EncoderLayerVars {
  Var<T> wq, wk, wv, wo;
  Var<T> ln1_g, ln1_b, ln2_g, ln2_b;
  Var<T> w1, b1, w2, b2;
};

// Registers one layer's parameters with `groups` independent instances.
template <class T>
EncoderLayerLayout add_encoder_layer(ParamStore<T>& store, const std::string& prefix, std::size_t groups,
                                     const EncoderConfig& config);

template <class T>
EncoderLayerVars<T> bind_layer(const EncoderLayerLayout& layout, const std::vector<Var<T>>& params);

template <class T>
struct QkvResult {
  Var<T> q, k, v;
};

// Row k of each output uses only block k's projection (or the shared one).
template <class T>
QkvResult<T> qkv_project(Var<T> h, Var<T> wq, Var<T> wk, Var<T> wv);

// Attention over the K tokens followed by the per-block output projection.
template <class T>
Var<T> multi_head_attention(Var<T> q, Var<T> k, Var<T> v, Var<T> wo, int n_heads, Tensor<T>* probs = nullptr);

// ReLU(x W1_k + b1_k) W2_k + b2_k, per block.
template <class T>
Var<T> block_ffn(Var<T> x, Var<T> w1, Var<T> b1, Var<T> w2, Var<T> b2);

// Pre-norm: X = H + MHA(LN1(H)); out = X + FFN(LN2(X)).
// Post-norm: X = LN1(H + MHA(H)); out = LN2(X + FFN(X)).
template <class T>
Var<T> encoder_layer(Var<T> h, const EncoderLayerVars<T>& p, const EncoderConfig& config, Tensor<T>* probs = nullptr);

// `probs`, if given, receives one attention tensor per layer.
template <class T>
Var<T> encoder_forward(Var<T> h, const std::vector<EncoderLayerVars<T>>& layers, const EncoderConfig& config,
                       std::vector<Tensor<T>>* probs = nullptr);

}  // namespace hhft
