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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hhft {

enum class BlockKind { kCategorical, kContinuous, kSequence };

std::string to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& s);

// One semantic feature block (user, item, query, behavior sequence, ...).
//
//  categorical: vocab_sizes/field_dims hold one entry per field; the block
//               embedding is the concatenation of the field lookups.
//  continuous:  cont_dim raw reals lifted by a learned affine map to e_k.
//  sequence:    vocab_sizes = {item vocab}, items embedded at width e_k and
//               pooled over the true length (at most max_seq_len).
struct BlockSpec {
  std::string name;
  BlockKind kind = BlockKind::kCategorical;
  std::vector<std::int32_t> vocab_sizes;
  std::vector<std::int32_t> field_dims;
  std::int32_t cont_dim = 0;
  std::int32_t e_k = 0;
  std::int32_t max_seq_len = 0;

  std::size_t field_arity() const;
  void validate() const;
  bool operator==(const BlockSpec&) const = default;
};

struct FeatureSchema {
  std::vector<BlockSpec> blocks;
  std::int32_t d = 0;

  std::size_t num_blocks() const { return blocks.size(); }
  // Index of the block with this name; throws SchemaError if absent.
  std::size_t block_index(const std::string& name) const;
  std::size_t total_embed_dim() const;
  void validate() const;
  bool operator==(const FeatureSchema&) const = default;
};

// Raw values for one block. Categorical: one id per field. Continuous: the
// reals. Sequence: the item ids, true length = ids.size().
struct BlockValues {
  std::vector<std::int32_t> ids;
  std::vector<double> reals;
  bool operator==(const BlockValues&) const = default;
};

struct ExampleRecord {
  std::int64_t index = 0;
  std::vector<BlockValues> blocks;
  std::int32_t label = 0;
  bool operator==(const ExampleRecord&) const = default;
};

using RecordBatch = std::span<const ExampleRecord* const>;

// Throws IndexError (id out of vocab), SchemaError (arity / length / NaN) or
// DataError (label not 0/1). Messages name the block.
void validate_record(const FeatureSchema& schema, const ExampleRecord& record);

nlohmann::json to_json(const BlockSpec& spec);
BlockSpec block_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const nlohmann::json& j);

// {"idx": n, "<block>": [...], ..., "label": 0|1}
nlohmann::json record_to_json(const FeatureSchema& schema, const ExampleRecord& record);
ExampleRecord record_from_json(const FeatureSchema& schema, const nlohmann::json& j);

// Desk-scale four-block schema: user, item, query (categorical) and a
// behavior sequence over the item vocabulary.
FeatureSchema default_schema(std::int32_t d = 32);

}  // namespace hhft
