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

// Feature tokenization: embed each semantic block, pool sequence blocks and
// project every block to the shared token width d.

#include <vector>

#include "hhft/ops.hpp"
#include "hhft/params.hpp"
#include "hhft/schema.hpp"

namespace hhft {

// E[.. x e_k] * W[e_k x d] + b[d]
template <class T>
Var<T> project_block(Var<T> embedding, Var<T> w_proj, Var<T> b_proj) {
  return linear(embedding, w_proj, b_proj);
}

// Masked mean over the first `true_len` rows of seq_embeds[L x e].
template <class T>
Var<T> pool_sequence(Var<T> seq_embeds, std::int32_t true_len, PoolMode mode = PoolMode::kMean) {
  const Shape& s = seq_embeds.shape();
  if (s.size() != 2) throw ShapeError("pool_sequence expects [L x e], got " + shape_str(s));
  Var<T> batched = reshape(seq_embeds, Shape{1, s[0], s[1]});
  const std::int32_t len[1] = {true_len};
  return reshape(sequence_pool(batched, std::span<const std::int32_t>(len), mode), Shape{s[1]});
}

// Parameter layout of the tokenizer inside a ParamStore.
struct TokenizerLayout {
  struct Block {
    std::vector<std::size_t> tables;  // one per categorical field / item table
    std::size_t lift_w = 0, lift_b = 0;
    std::size_t proj_w = 0, proj_b = 0;
  };
  std::vector<Block> blocks;
  bool projected = true;
};

template <class T>
class FeatureTokenizer {
 public:
  FeatureTokenizer() = default;
  // Registers embedding tables, continuous lifts and (if `project`) the
  // per-block projections in `store`.
  FeatureTokenizer(const FeatureSchema& schema, ParamStore<T>& store, bool project, PoolMode pooling);

  const FeatureSchema& schema() const { return schema_; }
  const TokenizerLayout& layout() const { return layout_; }

  // Block embedding E_k for every record of the batch: [B x e_k].
  Var<T> embed_block(std::size_t block, const std::vector<Var<T>>& params, RecordBatch batch) const;
  // All block embeddings, in schema order.
  std::vector<Var<T>> embed(const std::vector<Var<T>>& params, RecordBatch batch) const;
  // Aligned token matrix H0: [B x K x d].
  Var<T> tokenize(const std::vector<Var<T>>& params, RecordBatch batch) const;

 private:
  FeatureSchema schema_;
  TokenizerLayout layout_;
  PoolMode pooling_ = PoolMode::kMean;
};

}  // namespace hhft
