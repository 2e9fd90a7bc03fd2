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

#include "hhft/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <thread>

#include "hhft/error.hpp"
#include "hhft/metrics.hpp"
#include "hhft/random.hpp"

namespace hhft {

void GeneratorConfig::validate() const {
  schema.validate();
  if (records < 1) throw ConfigError("generator: records must be >= 1");
  if (!(flip_prob >= 0.0 && flip_prob < 0.5)) throw ConfigError("generator: flip_prob must lie in [0, 0.5)");
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) throw ConfigError("generator: eval_fraction must lie in [0, 1)");
  if (!std::isfinite(base_logit)) throw ConfigError("generator: base_logit must be finite");
  for (const auto& b : schema.blocks)
    if (b.kind == BlockKind::kSequence && (seq_min_len < 0 || seq_min_len > b.max_seq_len))
      throw ConfigError("generator: seq_min_len " + std::to_string(seq_min_len) + " outside [0, " +
                        std::to_string(b.max_seq_len) + "] for block '" + b.name + "'");
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto& it = interactions[i];
    const std::string where = "interaction " + std::to_string(i);
    if (it.blocks.empty() || it.blocks.size() > 3) throw ConfigError(where + ": must involve 1 to 3 blocks");
    if (std::isnan(it.strength)) throw ConfigError(where + ": strength is NaN");
    if (it.rank < 1) throw ConfigError(where + ": rank must be >= 1");
    for (std::size_t a = 0; a < it.blocks.size(); ++a) {
      bool found = false;
      for (const auto& b : schema.blocks) found = found || b.name == it.blocks[a];
      if (!found) throw ConfigError(where + ": unknown block '" + it.blocks[a] + "'");
      for (std::size_t c = 0; c < a; ++c)
        if (it.blocks[c] == it.blocks[a]) throw ConfigError(where + ": block '" + it.blocks[a] + "' repeated");
    }
  }
}

nlohmann::json to_json(const GeneratorConfig& c) {
  nlohmann::json inter = nlohmann::json::array();
  for (const auto& i : c.interactions)
    inter.push_back({{"blocks", i.blocks}, {"strength", i.strength}, {"rank", i.rank}});
  return {{"seed", c.seed},
          {"schema", to_json(c.schema)},
          {"interactions", inter},
          {"base_logit", c.base_logit},
          {"flip_prob", c.flip_prob},
          {"records", c.records},
          {"eval_fraction", c.eval_fraction},
          {"seq_min_len", c.seq_min_len}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.schema = j.contains("schema") ? schema_from_json(j.at("schema")) : default_schema();
    if (j.contains("interactions"))
      for (const auto& i : j.at("interactions"))
        c.interactions.push_back(
            {i.at("blocks").get<std::vector<std::string>>(), i.value("strength", 1.0), i.value("rank", 1)});
    c.base_logit = j.value("base_logit", c.base_logit);
    c.flip_prob = j.value("flip_prob", c.flip_prob);
    c.records = j.value("records", c.records);
    c.eval_fraction = j.value("eval_fraction", c.eval_fraction);
    c.seq_min_len = j.value("seq_min_len", c.seq_min_len);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed generator config: ") + e.what());
  }
  c.validate();
  return c;
}

GeneratorConfig planted_three_way_config(std::uint64_t seed, std::int64_t records, double flip_prob) {
  GeneratorConfig c;
  c.seed = seed;
  c.schema = default_schema();
  c.interactions = {{{"user", "item", "query"}, 3.0}};
  c.flip_prob = flip_prob;
  c.records = records;
  return c;
}

std::string fingerprint(const GeneratorConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

bool in_eval_split(std::int64_t index, double eval_fraction) {
  const double u = static_cast<double>(splitmix64(static_cast<std::uint64_t>(index)) >> 11) * 0x1.0p-53;
  return u < eval_fraction;
}

GroundTruth::GroundTruth(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  fingerprint_ = hhft::fingerprint(config_);
  const std::size_t k = config_.schema.num_blocks();
  rank_.assign(k, 1);
  for (const auto& it : config_.interactions) {
    std::vector<std::size_t> idx;
    for (const auto& name : it.blocks) idx.push_back(config_.schema.block_index(name));
    for (auto b : idx) rank_[b] = std::max(rank_[b], it.rank);
    terms_.push_back(std::move(idx));
  }
  signs_.resize(k);
  for (std::size_t b = 0; b < k; ++b) {
    const auto& spec = config_.schema.blocks[b];
    if (spec.kind == BlockKind::kContinuous) continue;
    const auto v = static_cast<std::size_t>(spec.vocab_sizes.at(0));
    for (int j = 0; j < rank_[b]; ++j) {
      std::vector<std::size_t> perm(v);
      for (std::size_t i = 0; i < v; ++i) perm[i] = i;
      Rng rng(config_.seed, fnv1a64("signs/" + spec.name + "/" + std::to_string(j)));
      for (std::size_t i = v; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      std::vector<std::int8_t> s(v);
      for (std::size_t i = 0; i < v; ++i) s[perm[i]] = i < v / 2 ? 1 : -1;
      signs_[b].push_back(std::move(s));
    }
  }
}

int GroundTruth::id_sign(std::size_t block, std::int32_t id, int component) const {
  return signs_.at(block).at(static_cast<std::size_t>(component)).at(static_cast<std::size_t>(id));
}

double GroundTruth::block_signal(std::size_t block, const ExampleRecord& r, int component) const {
  const auto& spec = config_.schema.blocks.at(block);
  const auto& v = r.blocks.at(block);
  switch (spec.kind) {
    case BlockKind::kCategorical:
      return id_sign(block, v.ids.at(0), component);
    case BlockKind::kContinuous:
      return v.reals.at(static_cast<std::size_t>(component % spec.cont_dim)) >= 0.0 ? 1.0 : -1.0;
    case BlockKind::kSequence: {
      if (v.ids.empty()) return 0.0;
      int sum = 0;
      for (auto id : v.ids) sum += id_sign(block, id, component);
      return static_cast<double>(sum) / static_cast<double>(v.ids.size());
    }
  }
  return 0.0;
}

namespace {

double term_value(const Interaction& it, const std::vector<std::size_t>& blocks,
                  const std::function<double(std::size_t, int)>& signal) {
  double acc = 0;
  for (int j = 0; j < it.rank; ++j) {
    double prod = 1;
    for (auto b : blocks) prod *= signal(b, j);
    acc += prod;
  }
  return it.rank == 1 ? it.strength * acc : it.strength / std::sqrt(static_cast<double>(it.rank)) * acc;
}

}  // namespace

double GroundTruth::logit(const ExampleRecord& r) const {
  double z = config_.base_logit;
  const std::function<double(std::size_t, int)> sig = [&](std::size_t b, int j) { return block_signal(b, r, j); };
  for (std::size_t t = 0; t < terms_.size(); ++t) z += term_value(config_.interactions[t], terms_[t], sig);
  return z;
}

double GroundTruth::click_probability(const ExampleRecord& r) const { return 1.0 / (1.0 + std::exp(-logit(r))); }

double GroundTruth::mean_click_probability() const {
  // Joint distribution of the signals of every block that takes part in some
  // interaction, as (probability, signal per component) outcomes.
  struct Outcome {
    double p;
    std::vector<double> s;
  };
  const std::size_t k = config_.schema.num_blocks();
  std::vector<std::vector<Outcome>> dist(k);
  std::vector<bool> used(k, false);
  for (const auto& t : terms_)
    for (auto b : t) used[b] = true;
  for (std::size_t b = 0; b < k; ++b) {
    if (!used[b]) continue;
    const auto& spec = config_.schema.blocks[b];
    const int r = rank_[b];
    if (spec.kind == BlockKind::kContinuous) {
      const int free = std::min(r, static_cast<int>(spec.cont_dim));
      for (int mask = 0; mask < (1 << free); ++mask) {
        Outcome o{1.0 / (1 << free), {}};
        for (int j = 0; j < r; ++j) o.s.push_back((mask >> (j % free)) & 1 ? 1.0 : -1.0);
        dist[b].push_back(std::move(o));
      }
    } else if (spec.kind == BlockKind::kCategorical) {
      const std::size_t v = signs_[b][0].size();
      for (std::size_t id = 0; id < v; ++id) {
        Outcome o{1.0 / static_cast<double>(v), {}};
        for (int j = 0; j < r; ++j) o.s.push_back(signs_[b][static_cast<std::size_t>(j)][id]);
        dist[b].push_back(std::move(o));
      }
    } else {
      if (r > 1) throw ContractError("no closed-form mean for sequence block '" + spec.name + "' at rank > 1");
      double pos = 0;
      for (auto s : signs_[b][0]) pos += s > 0;
      const double q = pos / static_cast<double>(signs_[b][0].size());
      const int lo = config_.seq_min_len, hi = spec.max_seq_len;
      const double p_len = 1.0 / static_cast<double>(hi - lo + 1);
      for (int len = lo; len <= hi; ++len) {
        if (len == 0) {
          dist[b].push_back({p_len, {0.0}});
          continue;
        }
        for (int j = 0; j <= len; ++j) {
          const double binom =
              std::exp(std::lgamma(len + 1.0) - std::lgamma(j + 1.0) - std::lgamma(len - j + 1.0));
          const double p = binom * std::pow(q, j) * std::pow(1.0 - q, len - j);
          dist[b].push_back({p_len * p, {static_cast<double>(2 * j - len) / len}});
        }
      }
    }
  }
  std::vector<const Outcome*> pick(k, nullptr);
  const std::function<double(std::size_t, int)> sig = [&](std::size_t b, int j) {
    return pick[b]->s[static_cast<std::size_t>(j)];
  };
  std::function<double(std::size_t, double)> walk = [&](std::size_t b, double prob) -> double {
    if (b == k) {
      double z = config_.base_logit;
      for (std::size_t t = 0; t < terms_.size(); ++t) z += term_value(config_.interactions[t], terms_[t], sig);
      return prob / (1.0 + std::exp(-z));
    }
    if (!used[b]) return walk(b + 1, prob);
    double acc = 0;
    for (const auto& o : dist[b]) {
      pick[b] = &o;
      acc += walk(b + 1, prob * o.p);
    }
    return acc;
  };
  return walk(0, 1.0);
}

double GroundTruth::mean_positive_rate() const {
  const double m = mean_click_probability();
  const double f = config_.flip_prob;
  return (1.0 - f) * m + f * (1.0 - m);
}

ExampleRecord draw_record(const GroundTruth& truth, std::int64_t index) {
  const auto& cfg = truth.config();
  Rng rng(cfg.seed, static_cast<std::uint64_t>(index));
  ExampleRecord r;
  r.index = index;
  for (const auto& spec : cfg.schema.blocks) {
    BlockValues v;
    switch (spec.kind) {
      case BlockKind::kCategorical:
        for (auto vocab : spec.vocab_sizes) v.ids.push_back(static_cast<std::int32_t>(rng.below(vocab)));
        break;
      case BlockKind::kContinuous:
        for (int i = 0; i < spec.cont_dim; ++i) v.reals.push_back(rng.normal());
        break;
      case BlockKind::kSequence: {
        const auto len = cfg.seq_min_len + static_cast<std::int32_t>(rng.below(spec.max_seq_len - cfg.seq_min_len + 1));
        for (std::int32_t i = 0; i < len; ++i) v.ids.push_back(static_cast<std::int32_t>(rng.below(spec.vocab_sizes[0])));
        break;
      }
    }
    r.blocks.push_back(std::move(v));
  }
  const double p = truth.click_probability(r);
  const double u_click = rng.uniform();
  const double u_flip = rng.uniform();
  r.label = u_click < p ? 1 : 0;
  if (u_flip < cfg.flip_prob) r.label = 1 - r.label;
  return r;
}

Dataset generate(const GeneratorConfig& config, int threads) {
  const GroundTruth truth(config);
  const auto n = static_cast<std::size_t>(config.records);
  std::vector<ExampleRecord> all(n);
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, n);
  auto fill = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) all[i] = draw_record(truth, static_cast<std::int64_t>(i));
  };
  if (workers == 1) {
    fill(0, n);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(fill, n * w / workers, n * (w + 1) / workers);
  }
  Dataset d;
  d.schema = config.schema;
  d.generator = to_json(config);
  d.fingerprint = truth.fingerprint();
  d.eval_fraction = config.eval_fraction;
  for (auto& r : all) (in_eval_split(r.index, config.eval_fraction) ? d.eval : d.train).push_back(std::move(r));
  return d;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json header = {{"format", "hhft-dataset"},
                           {"version", 1},
                           {"schema", to_json(data.schema)},
                           {"generator", data.generator},
                           {"fingerprint", data.fingerprint},
                           {"eval_fraction", data.eval_fraction},
                           {"counts",
                            {{"records", data.train.size() + data.eval.size()},
                             {"train", data.train.size()},
                             {"eval", data.eval.size()}}}};
  {
    std::ofstream h(dir / "header.json", std::ios::binary);
    h << header.dump(2) << '\n';
    if (!h) throw DataError("cannot write " + (dir / "header.json").string());
  }
  std::vector<const ExampleRecord*> order;
  for (const auto& r : data.train) order.push_back(&r);
  for (const auto& r : data.eval) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->index < b->index; });
  std::ofstream out(dir / "records.jsonl", std::ios::binary);
  for (const auto* r : order) out << record_to_json(data.schema, *r).dump() << '\n';
  if (!out) throw DataError("cannot write " + (dir / "records.jsonl").string());
}

namespace {

nlohmann::json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  const auto header = parse_json_file(dir / "header.json");
  Dataset d;
  try {
    if (header.value("format", "") != "hhft-dataset") throw DataError(dir.string() + ": not a dataset header");
    if (header.value("version", 0) != 1) throw DataError(dir.string() + ": unsupported dataset version");
    d.schema = schema_from_json(header.at("schema"));
    d.generator = header.value("generator", nlohmann::json());
    d.fingerprint = header.value("fingerprint", "");
    d.eval_fraction = header.value("eval_fraction", 0.1);
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "header.json").string() + ": " + e.what());
  }
  const auto path = dir / "records.jsonl";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ExampleRecord r;
    try {
      r = record_from_json(d.schema, nlohmann::json::parse(line));
      validate_record(d.schema, r);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    (in_eval_split(r.index, d.eval_fraction) ? d.eval : d.train).push_back(std::move(r));
  }
  return d;
}

double bayes_auc(const GroundTruth& truth, const Dataset& data) {
  if (data.fingerprint != truth.fingerprint())
    throw OracleError("dataset fingerprint '" + data.fingerprint + "' does not match generator '" +
                      truth.fingerprint() + "'");
  if (!(data.schema == truth.config().schema)) throw OracleError("dataset schema does not match generator");
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : data.eval) {
    scores.push_back(truth.click_probability(r));
    labels.push_back(r.label);
  }
  return auc(scores, labels);
}

}  // namespace hhft
