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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "hhft/datagen.hpp"
#include "hhft/error.hpp"
#include "hhft/metrics.hpp"

using hhft::Dataset;
using hhft::ExampleRecord;
using hhft::GeneratorConfig;
using hhft::GroundTruth;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "hhft_test_datagen" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<ExampleRecord> all_records(const Dataset& d) {
  std::vector<ExampleRecord> out = d.train;
  out.insert(out.end(), d.eval.begin(), d.eval.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  return out;
}

}  // namespace

TEST(Generate, SameSeedIsByteIdentical) {
  const auto cfg = hhft::planted_three_way_config(7, 3000);
  const auto a = temp_dir("a"), b = temp_dir("b");
  hhft::write_dataset(hhft::generate(cfg, 1), a);
  hhft::write_dataset(hhft::generate(cfg, 3), b);
  EXPECT_EQ(slurp(a / "records.jsonl"), slurp(b / "records.jsonl"));
  EXPECT_EQ(slurp(a / "header.json"), slurp(b / "header.json"));
  const auto c = temp_dir("c");
  hhft::write_dataset(hhft::generate(hhft::planted_three_way_config(8, 3000)), c);
  EXPECT_NE(slurp(a / "records.jsonl"), slurp(c / "records.jsonl"));
}

TEST(Generate, FileRoundTrip) {
  auto cfg = hhft::planted_three_way_config(3, 2000);
  cfg.schema.blocks.push_back({"ctx", hhft::BlockKind::kContinuous, {}, {}, 3, 4, 0});
  const Dataset d = hhft::generate(cfg);
  const auto dir = temp_dir("rt");
  hhft::write_dataset(d, dir);
  const Dataset back = hhft::read_dataset(dir);
  EXPECT_EQ(back.train, d.train);
  EXPECT_EQ(back.eval, d.eval);
  EXPECT_EQ(back.schema, d.schema);
  EXPECT_EQ(back.fingerprint, d.fingerprint);
  EXPECT_EQ(back.generator, d.generator);
  // LF endings, one record per line
  const std::string text = slurp(dir / "records.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2000);
  EXPECT_EQ(text.find('\r'), std::string::npos);
}

TEST(Generate, SplitIsByIndexHash) {
  const Dataset d = hhft::generate(hhft::planted_three_way_config(1, 20000));
  for (const auto& r : d.eval) EXPECT_TRUE(hhft::in_eval_split(r.index, 0.1));
  for (const auto& r : d.train) EXPECT_FALSE(hhft::in_eval_split(r.index, 0.1));
  const double frac = static_cast<double>(d.eval.size()) / 20000.0;
  EXPECT_NEAR(frac, 0.1, 3 * std::sqrt(0.09 / 20000.0));
}

TEST(Generate, RecordsConformToSchema) {
  const Dataset d = hhft::generate(hhft::planted_three_way_config(2, 2000));
  for (const auto& r : all_records(d)) EXPECT_NO_THROW(hhft::validate_record(d.schema, r));
}

TEST(Generate, InfiniteStrengthMainEffectIsDeterministic) {
  GeneratorConfig c;
  c.schema = hhft::default_schema();
  c.interactions = {{{"user"}, INFINITY}};
  c.records = 2000;
  const GroundTruth truth(c);
  const Dataset d = hhft::generate(c);
  for (const auto& r : all_records(d)) EXPECT_EQ(r.label, truth.id_sign(0, r.blocks[0].ids[0]) > 0 ? 1 : 0);
  EXPECT_EQ(hhft::bayes_auc(truth, d), 1.0);
}

TEST(Generate, PositiveRateMatchesAnalyticMean) {
  for (auto [base, flip] : {std::pair{0.0, 0.1}, std::pair{-1.0, 0.0}, std::pair{0.7, 0.25}}) {
    auto c = hhft::planted_three_way_config(11, 100000, flip);
    c.base_logit = base;
    const GroundTruth truth(c);
    const Dataset d = hhft::generate(c);
    double pos = 0;
    for (const auto& r : d.train) pos += r.label;
    for (const auto& r : d.eval) pos += r.label;
    const double rate = pos / 100000.0, mean = truth.mean_positive_rate();
    EXPECT_NEAR(rate, mean, 3 * std::sqrt(mean * (1 - mean) / 100000.0)) << "base " << base << " flip " << flip;
  }
}

TEST(Generate, AnalyticMeanCoversSequenceAndContinuousBlocks) {
  GeneratorConfig c;
  c.schema = hhft::default_schema();
  c.schema.blocks.push_back({"ctx", hhft::BlockKind::kContinuous, {}, {}, 2, 4, 0});
  c.interactions = {{{"behavior", "ctx"}, 2.0}, {{"user"}, 0.5}};
  c.base_logit = -0.4;
  c.records = 100000;
  const GroundTruth truth(c);
  const Dataset d = hhft::generate(c);
  double mc = 0;
  for (const auto& r : all_records(d)) mc += truth.click_probability(r);
  mc /= 100000.0;
  // the mean of p* is estimated much more tightly than the label rate
  EXPECT_NEAR(mc, truth.mean_click_probability(), 0.005);
}

TEST(Generate, InvalidInteractionIsConfigError) {
  auto c = hhft::planted_three_way_config(1, 10);
  c.interactions = {{{"user", "nobody"}, 1.0}};
  EXPECT_THROW(c.validate(), hhft::ConfigError);
  c.interactions = {{{"user", "user"}, 1.0}};
  EXPECT_THROW(c.validate(), hhft::ConfigError);
  c.interactions = {{{"user", "item", "query", "behavior"}, 1.0}};
  EXPECT_THROW(c.validate(), hhft::ConfigError);
  c = hhft::planted_three_way_config(1, 10);
  c.flip_prob = 0.5;
  EXPECT_THROW(c.validate(), hhft::ConfigError);
  c.flip_prob = 0.1;
  c.records = 0;
  EXPECT_THROW(c.validate(), hhft::ConfigError);
  EXPECT_THROW(hhft::generator_config_from_json(nlohmann::json{{"interactions", {{{"strength", 1}}}}}),
               hhft::ConfigError);
}

TEST(Generate, ConfigJsonRoundTrip) {
  auto c = hhft::planted_three_way_config(5, 1234, 0.2);
  c.interactions.push_back({{"query", "behavior"}, -0.5, 2});
  c.seq_min_len = 2;
  const auto back = hhft::generator_config_from_json(hhft::to_json(c));
  EXPECT_EQ(hhft::to_json(back), hhft::to_json(c));
  EXPECT_EQ(hhft::fingerprint(back), hhft::fingerprint(c));
}

TEST(BayesAuc, NoiselessDeterministicLabelsGiveOne) {
  GeneratorConfig c = hhft::planted_three_way_config(4, 5000, 0.0);
  c.interactions[0].strength = INFINITY;
  const GroundTruth truth(c);
  EXPECT_EQ(hhft::bayes_auc(truth, hhft::generate(c)), 1.0);
}

TEST(BayesAuc, ConstantProbabilityTiesToHalf) {
  GeneratorConfig c = hhft::planted_three_way_config(4, 5000);
  c.interactions.clear();
  const GroundTruth truth(c);
  EXPECT_EQ(hhft::bayes_auc(truth, hhft::generate(c)), 0.5);
}

TEST(BayesAuc, MismatchedConfigIsOracleError) {
  const auto c = hhft::planted_three_way_config(4, 500);
  const Dataset d = hhft::generate(c);
  const GroundTruth other(hhft::planted_three_way_config(5, 500));
  EXPECT_THROW(hhft::bayes_auc(other, d), hhft::OracleError);
}

TEST(PlantedInteraction, NoSingleFeatureSignal) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto c = hhft::planted_three_way_config(seed, 110000);
    const GroundTruth truth(c);
    const Dataset d = hhft::generate(c);
    const double bayes = hhft::bayes_auc(truth, d);
    EXPECT_GT(bayes, 0.75) << "seed " << seed;
    // score each record by the empirical positive rate of one raw feature value
    std::vector<int> labels;
    for (const auto& r : d.eval) labels.push_back(r.label);
    for (std::size_t b = 0; b < d.schema.num_blocks(); ++b) {
      const auto& spec = d.schema.blocks[b];
      for (std::size_t f = 0; f < spec.vocab_sizes.size(); ++f) {
        if (spec.kind == hhft::BlockKind::kSequence && f > 0) break;
        std::map<std::int32_t, std::pair<double, double>> stats;
        auto key = [&](const ExampleRecord& r) {
          const auto& ids = r.blocks[b].ids;
          if (spec.kind == hhft::BlockKind::kSequence) return ids.empty() ? -1 : ids[0];
          return ids[f];
        };
        for (const auto& r : d.train) {
          auto& s = stats[key(r)];
          s.first += r.label;
          s.second += 1;
        }
        std::vector<double> scores;
        for (const auto& r : d.eval) {
          const auto& s = stats[key(r)];
          scores.push_back(s.second > 0 ? s.first / s.second : 0.5);
        }
        EXPECT_LE(hhft::auc(scores, labels), 0.51) << "seed " << seed << " block " << spec.name << " field " << f;
      }
    }
  }
}

TEST(ReadDataset, MalformedLineNamesFileAndLine) {
  const auto dir = temp_dir("bad");
  hhft::write_dataset(hhft::generate(hhft::planted_three_way_config(1, 20)), dir);
  std::string text = slurp(dir / "records.jsonl");
  std::size_t third = 0;
  for (int i = 0; i < 2; ++i) third = text.find('\n', third) + 1;
  text.insert(third, "{not json\n");
  std::ofstream(dir / "records.jsonl", std::ios::binary | std::ios::trunc) << text;
  try {
    hhft::read_dataset(dir);
    FAIL();
  } catch (const hhft::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("records.jsonl:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(hhft::read_dataset(temp_dir("missing")), hhft::DataError);
}
