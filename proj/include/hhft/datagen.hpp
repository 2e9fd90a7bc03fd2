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
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhft/schema.hpp"

namespace hhft {

// Product of block signals with a weight. One to three blocks. With rank r
// every block carries r independent signals and the term is
// strength / sqrt(r) * sum_j prod_blocks signal_j.
struct Interaction {
  std::vector<std::string> blocks;
  double strength = 1.0;
  int rank = 1;
  bool operator==(const Interaction&) const = default;
};

// Synthetic click data. Each block carries hidden signals in [-1, 1]; signal j
// of a block is
//   categorical  +1 for half of the ids of field 0 and -1 for the other half
//                (a seeded balanced split of the vocabulary, one per j)
//   continuous   sign of real j mod cont_dim, reals drawn N(0, 1)
//   sequence     mean signal j of the items, 0 for an empty sequence
// The click probability is sigmoid(base_logit + sum strength * prod signals).
// Labels are Bernoulli draws flipped with probability flip_prob.
struct GeneratorConfig {
  std::uint64_t seed = 1;
  FeatureSchema schema;
  std::vector<Interaction> interactions;
  double base_logit = 0.0;
  double flip_prob = 0.0;
  std::int64_t records = 1000;
  double eval_fraction = 0.1;
  // Sequence lengths are uniform on [seq_min_len, max_seq_len].
  std::int32_t seq_min_len = 0;

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

// Pure three-way sign interaction across user, item and query of the default
// schema, no main effects.
GeneratorConfig planted_three_way_config(std::uint64_t seed, std::int64_t records, double flip_prob = 0.1);

// Hex fnv1a digest of the canonical config dump.
std::string fingerprint(const GeneratorConfig& c);

// True on the evaluation side of the split for this record index.
bool in_eval_split(std::int64_t index, double eval_fraction);

class GroundTruth {
 public:
  explicit GroundTruth(GeneratorConfig config);

  const GeneratorConfig& config() const { return config_; }
  const std::string& fingerprint() const { return fingerprint_; }

  double block_signal(std::size_t block, const ExampleRecord& r, int component = 0) const;
  double logit(const ExampleRecord& r) const;
  double click_probability(const ExampleRecord& r) const;
  // Signal of one categorical id under the balanced split.
  int id_sign(std::size_t block, std::int32_t id, int component = 0) const;

  // Exact expectation of the click probability over the record distribution.
  // Throws ContractError for a sequence block in an interaction of rank > 1.
  double mean_click_probability() const;
  // Same, after label noise.
  double mean_positive_rate() const;

 private:
  GeneratorConfig config_;
  std::string fingerprint_;
  std::vector<std::vector<std::vector<std::int8_t>>> signs_;  // [block][component][id of field 0]
  std::vector<int> rank_;                                      // components used per block
  std::vector<std::vector<std::size_t>> terms_;  // block indices per interaction
};

// Deterministic record draw; record i depends only on (seed, i).
ExampleRecord draw_record(const GroundTruth& truth, std::int64_t index);

struct Dataset {
  FeatureSchema schema;
  nlohmann::json generator;  // null when not synthetic
  std::string fingerprint;   // empty when not synthetic
  double eval_fraction = 0.1;
  std::vector<ExampleRecord> train;
  std::vector<ExampleRecord> eval;
};

// Draws all records, sharded over `threads` workers by index range.
Dataset generate(const GeneratorConfig& config, int threads = 1);

// <dir>/header.json and <dir>/records.jsonl
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

// AUC of the true click probability on the evaluation records. Throws
// OracleError if the dataset was not generated from this configuration.
double bayes_auc(const GroundTruth& truth, const Dataset& data);

}  // namespace hhft
