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

#include "hhft/tokenizer.hpp"

namespace hhft {
namespace {

template <class E>
[[noreturn]] void rethrow_with_record(const E& e, std::size_t r) {
  throw E("record " + std::to_string(r) + ": " + e.what());
}

void check_batch(const FeatureSchema& schema, RecordBatch batch) {
  for (std::size_t r = 0; r < batch.size(); ++r) {
    try {
      validate_record(schema, *batch[r]);
    } catch (const IndexError& e) {
      rethrow_with_record(e, r);
    } catch (const SchemaError& e) {
      rethrow_with_record(e, r);
    } catch (const DataError& e) {
      rethrow_with_record(e, r);
    }
  }
}

}  // namespace

std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEmbedding:
      return "embedding";
    case ParamGroup::kWeight:
      return "weight";
    case ParamGroup::kBias:
      return "bias";
    case ParamGroup::kNormGain:
      return "norm_gain";
    case ParamGroup::kNormBias:
      return "norm_bias";
  }
  return "?";
}

template <class T>
FeatureTokenizer<T>::FeatureTokenizer(const FeatureSchema& schema, ParamStore<T>& store, bool project,
                                      PoolMode pooling)
    : schema_(schema), pooling_(pooling) {
  schema_.validate();
  layout_.projected = project;
  const auto d = static_cast<std::size_t>(schema_.d);
  for (const BlockSpec& b : schema_.blocks) {
    TokenizerLayout::Block lb;
    const auto e = static_cast<std::size_t>(b.e_k);
    const std::string pre = "tok." + b.name;
    switch (b.kind) {
      case BlockKind::kCategorical:
        for (std::size_t f = 0; f < b.vocab_sizes.size(); ++f) {
          const auto v = static_cast<std::size_t>(b.vocab_sizes[f]);
          const auto w = static_cast<std::size_t>(b.field_dims[f]);
          lb.tables.push_back(
              store.add({pre + ".embed" + std::to_string(f), ParamGroup::kEmbedding, v, w, false}, {v, w}));
        }
        break;
      case BlockKind::kSequence: {
        const auto v = static_cast<std::size_t>(b.vocab_sizes[0]);
        lb.tables.push_back(store.add({pre + ".embed", ParamGroup::kEmbedding, v, e, false}, {v, e}));
        break;
      }
      case BlockKind::kContinuous: {
        const auto c = static_cast<std::size_t>(b.cont_dim);
        lb.lift_w = store.add({pre + ".lift_w", ParamGroup::kWeight, c, e, false}, {c, e});
        lb.lift_b = store.add({pre + ".lift_b", ParamGroup::kBias, c, e, false}, {e});
        break;
      }
    }
    if (project) {
      lb.proj_w = store.add({pre + ".proj_w", ParamGroup::kWeight, e, d, false}, {e, d});
      lb.proj_b = store.add({pre + ".proj_b", ParamGroup::kBias, e, d, false}, {d});
    }
    layout_.blocks.push_back(std::move(lb));
  }
}

template <class T>
Var<T> FeatureTokenizer<T>::embed_block(std::size_t k, const std::vector<Var<T>>& params, RecordBatch batch) const {
  const BlockSpec& spec = schema_.blocks.at(k);
  const TokenizerLayout::Block& lb = layout_.blocks.at(k);
  const std::size_t n = batch.size();
  Tape<T>& tape = params.front().tape();
  const std::string what = "block '" + spec.name + "'";
  switch (spec.kind) {
    case BlockKind::kCategorical: {
      std::vector<Var<T>> parts;
      std::vector<std::int32_t> ids(n);
      for (std::size_t f = 0; f < spec.vocab_sizes.size(); ++f) {
        for (std::size_t r = 0; r < n; ++r) {
          const auto& v = batch[r]->blocks.at(k).ids;
          if (v.size() != spec.vocab_sizes.size())
            throw SchemaError(what + ": record " + std::to_string(r) + " has " + std::to_string(v.size()) +
                              " ids, expected " + std::to_string(spec.vocab_sizes.size()));
          ids[r] = v[f];
        }
        parts.push_back(embedding_lookup(params[lb.tables[f]], std::span<const std::int32_t>(ids),
                                         what + " field " + std::to_string(f)));
      }
      return parts.size() == 1 ? parts[0] : concat(std::span<const Var<T>>(parts), 1);
    }
    case BlockKind::kContinuous: {
      const auto c = static_cast<std::size_t>(spec.cont_dim);
      Tensor<T> x({n, c});
      for (std::size_t r = 0; r < n; ++r) {
        const auto& v = batch[r]->blocks.at(k).reals;
        if (v.size() != c)
          throw SchemaError(what + ": record " + std::to_string(r) + " has " + std::to_string(v.size()) +
                            " values, expected " + std::to_string(c));
        for (std::size_t j = 0; j < c; ++j) x[r * c + j] = static_cast<T>(v[j]);
      }
      return linear(tape.constant(std::move(x)), params[lb.lift_w], params[lb.lift_b]);
    }
    case BlockKind::kSequence: {
      const auto max_len = static_cast<std::size_t>(spec.max_seq_len);
      std::vector<std::int32_t> ids(n * max_len, 0), lengths(n);
      for (std::size_t r = 0; r < n; ++r) {
        const auto& v = batch[r]->blocks.at(k).ids;
        if (v.size() > max_len)
          throw SchemaError(what + ": record " + std::to_string(r) + " sequence length " + std::to_string(v.size()) +
                            " exceeds max_seq_len " + std::to_string(max_len));
        std::copy(v.begin(), v.end(), ids.begin() + static_cast<std::ptrdiff_t>(r * max_len));
        lengths[r] = static_cast<std::int32_t>(v.size());
      }
      Var<T> rows = embedding_lookup(params[lb.tables[0]], std::span<const std::int32_t>(ids), what);
      rows = reshape(rows, Shape{n, max_len, static_cast<std::size_t>(spec.e_k)});
      return sequence_pool(rows, std::span<const std::int32_t>(lengths), pooling_);
    }
  }
  throw SchemaError("unhandled block kind");
}

template <class T>
std::vector<Var<T>> FeatureTokenizer<T>::embed(const std::vector<Var<T>>& params, RecordBatch batch) const {
  check_batch(schema_, batch);
  std::vector<Var<T>> out;
  for (std::size_t k = 0; k < schema_.blocks.size(); ++k) out.push_back(embed_block(k, params, batch));
  return out;
}

template <class T>
Var<T> FeatureTokenizer<T>::tokenize(const std::vector<Var<T>>& params, RecordBatch batch) const {
  if (!layout_.projected) throw ContractError("tokenize() on a tokenizer built without projections");
  check_batch(schema_, batch);
  const std::size_t n = batch.size();
  const auto d = static_cast<std::size_t>(schema_.d);
  std::vector<Var<T>> tokens;
  for (std::size_t k = 0; k < schema_.blocks.size(); ++k) {
    const auto& lb = layout_.blocks[k];
    Var<T> h = project_block(embed_block(k, params, batch), params[lb.proj_w], params[lb.proj_b]);
    tokens.push_back(reshape(h, Shape{n, 1, d}));
  }
  return concat(std::span<const Var<T>>(tokens), 1);
}

template class FeatureTokenizer<float>;
template class FeatureTokenizer<double>;

}  // namespace hhft
