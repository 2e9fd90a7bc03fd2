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

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hhft/autodiff.hpp"

namespace hhft {

// Scalar multiply counter for the forward pass of every op on this thread.
// Used to cross-check the analytic FLOPs estimator.
struct MultiplyCounter {
  static std::uint64_t& value();
  static void reset() { value() = 0; }
};

// [m x k] * [k x n]
template <class T>
Var<T> matmul(Var<T> a, Var<T> b);

// x[..., in] * w[in x out] (+ b[out]); `b` may be an invalid Var for no bias.
template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b = {});

// Per-token affine map: row k of x[B x K x in] uses w[g] and b[g], where
// w is [G x in x out], b is [G x out] (or invalid) and G is K or 1 (shared).
template <class T>
Var<T> blockwise_linear(Var<T> x, Var<T> w, Var<T> b = {});

template <class T>
Var<T> add(Var<T> a, Var<T> b);
// x[..., n] + b[n]
template <class T>
Var<T> add_bias(Var<T> x, Var<T> b);
template <class T>
Var<T> mul(Var<T> a, Var<T> b);
template <class T>
Var<T> scale(Var<T> x, T factor);
template <class T>
Var<T> relu(Var<T> x);
template <class T>
Var<T> sigmoid(Var<T> x);

template <class T>
Var<T> reshape(Var<T> x, Shape shape);
template <class T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);
template <class T>
Var<T> concat(std::initializer_list<Var<T>> parts, std::size_t axis) {
  return concat(std::span<const Var<T>>(parts.begin(), parts.size()), axis);
}
// Half-open range [begin, end) along `axis`.
template <class T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end);
// Removes `axis`.
template <class T>
Var<T> mean_over_axis(Var<T> x, std::size_t axis);
template <class T>
Var<T> sum(Var<T> x);

// Softmax over the last axis, max-subtracted.
template <class T>
Var<T> softmax(Var<T> x);

// Normalizes each row of the last axis, then applies gain/bias. gain and
// bias are [d], or [G x d] for x of shape [B x K x d] with G in {1, K}.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));

// Gathers rows of table[V x e]. `what` names the table in error messages.
template <class T>
Var<T> embedding_lookup(Var<T> table, std::span<const std::int32_t> ids, std::string_view what = "embedding");

enum class PoolMode { kMean, kLast };

// x[B x L x e] -> [B x e], using only the first lengths[b] rows of record b.
// Zero-length sequences pool to the zero vector.
template <class T>
Var<T> sequence_pool(Var<T> x, std::span<const std::int32_t> lengths, PoolMode mode = PoolMode::kMean);

// Multi-head scaled dot-product attention.
// q[B x M x dq], k[B x N x dq], v[B x N x dv]; both dq and dv are split into
// n_heads contiguous slices. Logits are scaled by 1/sqrt(dq / n_heads).
// If `probs_out` is given it receives the attention weights [B x H x M x N].
template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t n_heads, Tensor<T>* probs_out = nullptr);

// Mean binary cross-entropy on logits, softplus-stabilized. labels in {0,1}.
template <class T>
Var<T> bce_with_logits(Var<T> logits, std::span<const T> labels);

}  // namespace hhft
