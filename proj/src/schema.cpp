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

#include "hhft/schema.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "hhft/error.hpp"

namespace hhft {

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::kCategorical:
      return "categorical";
    case BlockKind::kContinuous:
      return "continuous";
    case BlockKind::kSequence:
      return "sequence";
  }
  return "?";
}

BlockKind block_kind_from_string(const std::string& s) {
  if (s == "categorical") return BlockKind::kCategorical;
  if (s == "continuous") return BlockKind::kContinuous;
  if (s == "sequence") return BlockKind::kSequence;
  throw SchemaError("unknown block kind '" + s + "' (expected categorical, continuous or sequence)");
}

std::size_t BlockSpec::field_arity() const {
  switch (kind) {
    case BlockKind::kCategorical:
      return vocab_sizes.size();
    case BlockKind::kContinuous:
      return static_cast<std::size_t>(cont_dim);
    case BlockKind::kSequence:
      return 1;
  }
  return 0;
}

void BlockSpec::validate() const {
  const std::string where = "block '" + name + "': ";
  if (name.empty()) throw SchemaError("block with empty name");
  if (e_k < 1) throw SchemaError(where + "e_k must be >= 1");
  for (auto v : vocab_sizes)
    if (v < 1) throw SchemaError(where + "vocab sizes must be >= 1");
  switch (kind) {
    case BlockKind::kCategorical: {
      if (vocab_sizes.empty()) throw SchemaError(where + "categorical block needs at least one field");
      if (field_dims.size() != vocab_sizes.size())
        throw SchemaError(where + "field_dims must have one entry per categorical field");
      for (auto w : field_dims)
        if (w < 1) throw SchemaError(where + "field dims must be >= 1");
      if (std::accumulate(field_dims.begin(), field_dims.end(), 0) != e_k)
        throw SchemaError(where + "e_k must equal the sum of field_dims");
      break;
    }
    case BlockKind::kContinuous:
      if (cont_dim < 1) throw SchemaError(where + "continuous block needs cont_dim >= 1");
      break;
    case BlockKind::kSequence:
      if (vocab_sizes.size() != 1) throw SchemaError(where + "sequence block needs exactly one item vocab size");
      if (max_seq_len < 1) throw SchemaError(where + "sequence block needs max_seq_len >= 1");
      break;
  }
}

std::size_t FeatureSchema::block_index(const std::string& name) const {
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].name == name) return i;
  throw SchemaError("schema has no block named '" + name + "'");
}

std::size_t FeatureSchema::total_embed_dim() const {
  std::size_t total = 0;
  for (const auto& b : blocks) total += static_cast<std::size_t>(b.e_k);
  return total;
}

void FeatureSchema::validate() const {
  if (blocks.size() < 2) throw SchemaError("schema needs at least 2 blocks, got " + std::to_string(blocks.size()));
  if (d < 1) throw SchemaError("token dimension d must be >= 1");
  std::set<std::string> names;
  for (const auto& b : blocks) {
    b.validate();
    if (!names.insert(b.name).second) throw SchemaError("duplicate block name '" + b.name + "'");
  }
}

void validate_record(const FeatureSchema& schema, const ExampleRecord& record) {
  if (record.blocks.size() != schema.blocks.size())
    throw SchemaError("record has " + std::to_string(record.blocks.size()) + " blocks, schema has " +
                      std::to_string(schema.blocks.size()));
  for (std::size_t k = 0; k < schema.blocks.size(); ++k) {
    const BlockSpec& spec = schema.blocks[k];
    const BlockValues& v = record.blocks[k];
    const std::string where = "block '" + spec.name + "'";
    switch (spec.kind) {
      case BlockKind::kCategorical:
        if (v.ids.size() != spec.vocab_sizes.size() || !v.reals.empty())
          throw SchemaError(where + ": expected " + std::to_string(spec.vocab_sizes.size()) + " categorical ids, got " +
                            std::to_string(v.ids.size()));
        for (std::size_t f = 0; f < v.ids.size(); ++f)
          if (v.ids[f] < 0 || v.ids[f] >= spec.vocab_sizes[f])
            throw IndexError(where + " field " + std::to_string(f) + ": id " + std::to_string(v.ids[f]) +
                             " out of range [0, " + std::to_string(spec.vocab_sizes[f]) + ")");
        break;
      case BlockKind::kContinuous:
        if (v.reals.size() != static_cast<std::size_t>(spec.cont_dim) || !v.ids.empty())
          throw SchemaError(where + ": expected " + std::to_string(spec.cont_dim) + " continuous values, got " +
                            std::to_string(v.reals.size()));
        for (double x : v.reals)
          if (!std::isfinite(x)) throw SchemaError(where + ": non-finite continuous value");
        break;
      case BlockKind::kSequence:
        if (v.ids.size() > static_cast<std::size_t>(spec.max_seq_len))
          throw SchemaError(where + ": sequence length " + std::to_string(v.ids.size()) + " exceeds max_seq_len " +
                            std::to_string(spec.max_seq_len));
        for (auto id : v.ids)
          if (id < 0 || id >= spec.vocab_sizes[0])
            throw IndexError(where + ": item id " + std::to_string(id) + " out of range [0, " +
                             std::to_string(spec.vocab_sizes[0]) + ")");
        break;
    }
  }
  if (record.label != 0 && record.label != 1)
    throw DataError("label must be 0 or 1, got " + std::to_string(record.label));
}

nlohmann::json to_json(const BlockSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["kind"] = to_string(spec.kind);
  j["e_k"] = spec.e_k;
  switch (spec.kind) {
    case BlockKind::kCategorical:
      j["vocab_sizes"] = spec.vocab_sizes;
      j["field_dims"] = spec.field_dims;
      break;
    case BlockKind::kContinuous:
      j["cont_dim"] = spec.cont_dim;
      break;
    case BlockKind::kSequence:
      j["vocab_sizes"] = spec.vocab_sizes;
      j["max_seq_len"] = spec.max_seq_len;
      break;
  }
  return j;
}

BlockSpec block_spec_from_json(const nlohmann::json& j) {
  try {
    BlockSpec s;
    s.name = j.at("name").get<std::string>();
    s.kind = block_kind_from_string(j.at("kind").get<std::string>());
    s.e_k = j.value("e_k", 0);
    s.vocab_sizes = j.value("vocab_sizes", std::vector<std::int32_t>{});
    s.field_dims = j.value("field_dims", std::vector<std::int32_t>{});
    s.cont_dim = j.value("cont_dim", 0);
    s.max_seq_len = j.value("max_seq_len", 0);
    if (s.kind == BlockKind::kCategorical && s.field_dims.empty() && s.e_k > 0 && !s.vocab_sizes.empty()) {
      // Even split of e_k across fields when per-field widths are omitted.
      const auto n = static_cast<std::int32_t>(s.vocab_sizes.size());
      for (std::int32_t f = 0; f < n; ++f) s.field_dims.push_back(s.e_k / n + (f < s.e_k % n ? 1 : 0));
    }
    if (s.kind == BlockKind::kCategorical && s.e_k == 0)
      s.e_k = std::accumulate(s.field_dims.begin(), s.field_dims.end(), 0);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed block spec: ") + e.what());
  }
}

nlohmann::json to_json(const FeatureSchema& schema) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : schema.blocks) blocks.push_back(to_json(b));
  return {{"blocks", blocks}, {"d", schema.d}};
}

FeatureSchema schema_from_json(const nlohmann::json& j) {
  FeatureSchema s;
  try {
    for (const auto& b : j.at("blocks")) s.blocks.push_back(block_spec_from_json(b));
    s.d = j.value("d", 32);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed schema: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json record_to_json(const FeatureSchema& schema, const ExampleRecord& record) {
  nlohmann::json j;
  j["idx"] = record.index;
  for (std::size_t k = 0; k < schema.blocks.size(); ++k) {
    const BlockSpec& spec = schema.blocks[k];
    if (spec.kind == BlockKind::kContinuous)
      j[spec.name] = record.blocks[k].reals;
    else
      j[spec.name] = record.blocks[k].ids;
  }
  j["label"] = record.label;
  return j;
}

ExampleRecord record_from_json(const FeatureSchema& schema, const nlohmann::json& j) {
  ExampleRecord r;
  try {
    r.index = j.value("idx", std::int64_t{0});
    r.blocks.resize(schema.blocks.size());
    for (std::size_t k = 0; k < schema.blocks.size(); ++k) {
      const BlockSpec& spec = schema.blocks[k];
      if (!j.contains(spec.name)) throw SchemaError("record is missing block '" + spec.name + "'");
      if (spec.kind == BlockKind::kContinuous)
        r.blocks[k].reals = j.at(spec.name).get<std::vector<double>>();
      else
        r.blocks[k].ids = j.at(spec.name).get<std::vector<std::int32_t>>();
    }
    r.label = j.at("label").get<std::int32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed record: ") + e.what());
  }
  validate_record(schema, r);
  return r;
}

FeatureSchema default_schema(std::int32_t d) {
  FeatureSchema s;
  s.d = d;
  s.blocks.push_back({"user", BlockKind::kCategorical, {64, 16}, {8, 8}, 0, 16, 0});
  s.blocks.push_back({"item", BlockKind::kCategorical, {64, 16}, {8, 8}, 0, 16, 0});
  s.blocks.push_back({"query", BlockKind::kCategorical, {64}, {16}, 0, 16, 0});
  s.blocks.push_back({"behavior", BlockKind::kSequence, {64}, {}, 0, 16, 8});
  return s;
}

}  // namespace hhft
