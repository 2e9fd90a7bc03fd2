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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hhft/experiment.hpp"

using hhft::ExperimentConfig;
using hhft::Knob;
using nlohmann::json;

namespace {

json tiny_experiment(const std::string& variant = "hhft") {
  json schema = hhft::to_json(hhft::default_schema(8));
  for (auto& b : schema["blocks"]) b["vocab_sizes"][0] = 8;
  return {{"run_id", "tiny"},
          {"model", {{"variant", variant}, {"schema", schema}, {"d", 8}, {"d_ffn", 8}, {"n_heads", 2},
                     {"d_h", 2}, {"n_h", 2}, {"head_hidden", {8}}}},
          {"train", {{"epochs", 1}, {"batch_size", 64}, {"eval_batch_size", 128}}},
          {"generator", {{"records", 600}, {"interactions", {{{"blocks", {"user", "item", "query"}}, {"strength", 3}}}},
                         {"flip_prob", 0.1}}},
          {"seeds", {1}}};
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "hhft_test_experiment" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> json_leaves_differing(const json& a, const json& b, const std::string& path = "") {
  std::vector<std::string> out;
  if (a.is_object() && b.is_object()) {
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k)) out.push_back(path + "/" + k);
      else for (auto& d : json_leaves_differing(v, b.at(k), path + "/" + k)) out.push_back(d);
    }
    for (const auto& [k, v] : b.items())
      if (!a.contains(k)) out.push_back(path + "/" + k);
    return out;
  }
  if (a != b) out.push_back(path);
  return out;
}

}  // namespace

TEST(ExperimentConfig, JsonRoundTripAndValidation) {
  const ExperimentConfig c = hhft::experiment_config_from_json(tiny_experiment());
  EXPECT_EQ(hhft::to_json(hhft::experiment_config_from_json(hhft::to_json(c))), hhft::to_json(c));
  json both = tiny_experiment();
  both["dataset"] = "somewhere";
  EXPECT_THROW(hhft::experiment_config_from_json(both), hhft::ConfigError);
  json none = tiny_experiment();
  none.erase("generator");
  EXPECT_THROW(hhft::experiment_config_from_json(none), hhft::ConfigError);
  json bad_heads = tiny_experiment();
  bad_heads["model"]["n_heads"] = 3;
  EXPECT_THROW(hhft::experiment_config_from_json(bad_heads), hhft::ConfigError);
}

TEST(ExperimentConfig, MissingDatasetNamesPath) {
  json j = tiny_experiment();
  j.erase("generator");
  j["dataset"] = "/nonexistent/hhft/data";
  const auto c = hhft::experiment_config_from_json(j);
  try {
    hhft::load_experiment_data(c);
    FAIL();
  } catch (const hhft::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/hhft/data"), std::string::npos) << e.what();
  }
}

TEST(Aggregate, SampleStatistics) {
  const double one[] = {0.7};
  EXPECT_EQ(hhft::aggregate(one).mean, 0.7);
  EXPECT_EQ(hhft::aggregate(one).std, 0.0);
  const double three[] = {1, 2, 4};
  const auto a = hhft::aggregate(three);
  EXPECT_DOUBLE_EQ(a.mean, 7.0 / 3);
  EXPECT_DOUBLE_EQ(a.std, std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) +
                                     (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2));
}

TEST(RunSeeds, ParallelMatchesSequentialAndWritesAggregate) {
  json j = tiny_experiment();
  j["seeds"] = {1, 2, 3};
  const auto c = hhft::experiment_config_from_json(j);
  const auto data = hhft::load_experiment_data(c);
  const auto seq = hhft::run_seeds(c, data, 1);
  const auto par = hhft::run_seeds(c, data, 3);
  ASSERT_EQ(seq.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(seq[i].seed, i + 1);
    EXPECT_EQ(hhft::to_json(seq[i].report), hhft::to_json(par[i].report));
  }
  EXPECT_NE(seq[0].report.final_auc, seq[1].report.final_auc);

  const auto dir = temp_dir("seeds");
  hhft::write_runs(dir, c, seq, hhft::oracle_auc(data));
  for (int s = 1; s <= 3; ++s) {
    EXPECT_TRUE(std::filesystem::exists(dir / ("seed_" + std::to_string(s)) / "report.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / ("seed_" + std::to_string(s)) / "epochs.csv"));
  }
  const json summary = hhft::read_json_file(dir / "summary.json");
  std::vector<double> aucs;
  for (int s = 1; s <= 3; ++s)
    aucs.push_back(hhft::read_json_file(dir / ("seed_" + std::to_string(s)) / "report.json").at("final_auc"));
  const auto agg = hhft::aggregate(aucs);
  EXPECT_EQ(summary.at("auc_mean").get<double>(), agg.mean);
  EXPECT_EQ(summary.at("auc_std").get<double>(), agg.std);
  EXPECT_FALSE(summary.at("bayes_auc").is_null());
  const std::string csv = slurp(dir / "aggregate.csv");
  EXPECT_NE(csv.find("\nmean,"), std::string::npos);
  EXPECT_NE(csv.find("\nstd,"), std::string::npos);
}

TEST(RunSeeds, ReportEchoesItsSeed) {
  json j = tiny_experiment();
  j["seeds"] = {7};
  const auto c = hhft::experiment_config_from_json(j);
  const auto runs = hhft::run_seeds(c, hhft::load_experiment_data(c));
  EXPECT_EQ(runs[0].report.config.at("seed"), 7);
  EXPECT_FALSE(runs[0].report.config.contains("seeds"));
  EXPECT_FALSE(runs[0].report.config.at("train").contains("seed"));
}

TEST(Ablation, LadderStructure) {
  const auto c = hhft::experiment_config_from_json(tiny_experiment());
  const auto ladder = hhft::ablation_ladder(c);
  const std::vector<std::string> names = {"mlp", "shared-transformer", "hhft(n2=0)", "hhft", "hhft+init",
                                          "hhft-scaled"};
  ASSERT_EQ(ladder.size(), names.size());
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(ladder[i].name, names[i]);
  EXPECT_EQ(ladder[0].config.model.variant, hhft::Variant::kMlp);
  EXPECT_EQ(ladder[2].config.model.effective_n2(), 0);
  EXPECT_EQ(ladder[4].config.init.kind, hhft::InitKind::kZerosResidualOut);
  EXPECT_EQ(ladder[5].config.model.schema.d, 2 * c.model.schema.d);
}

TEST(Ablation, RunsEveryRungAndMlpDeltaIsZero) {
  const auto c = hhft::experiment_config_from_json(tiny_experiment());
  const auto data = hhft::load_experiment_data(c);
  const auto rungs = hhft::run_ablation(c, data, 2);
  ASSERT_EQ(rungs.size(), 6u);
  EXPECT_EQ(rungs[0].delta_vs_mlp, 0.0);
  for (const auto& r : rungs) EXPECT_EQ(r.delta_vs_mlp, r.auc.mean - rungs[0].auc.mean);
  const auto dir = temp_dir("ablate");
  hhft::write_ablation(dir, rungs, hhft::oracle_auc(data));
  const std::string csv = slurp(dir / "ladder.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_EQ(csv.rfind("rung,name,auc_mean,auc_std,auc_gain_vs_mlp,dense_params,flops\n1,mlp,", 0), 0u);
}

TEST(Sweep, MultiKnobSpecIsRejected) {
  const json spec = {{"base", tiny_experiment()}, {"knobs", {"n1", "d_ffn"}}};
  try {
    hhft::sweep_spec_from_json(spec);
    FAIL();
  } catch (const hhft::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("keeping other parameters fixed"), std::string::npos) << e.what();
  }
  EXPECT_THROW(hhft::sweep_spec_from_json({{"base", tiny_experiment()}, {"knob", "depth"}}), hhft::ConfigError);
  EXPECT_THROW(hhft::sweep_spec_from_json({{"base", tiny_experiment()}, {"knob", "n1"}, {"multipliers", {1, 1}}}),
               hhft::ConfigError);
  EXPECT_THROW(hhft::sweep_spec_from_json({{"base", tiny_experiment()}, {"knob", "n1"}, {"multipliers", {0, 1}}}),
               hhft::ConfigError);
}

TEST(Sweep, EachPointDiffersFromBaseInExactlyOneField) {
  for (const char* knob : {"n1", "d_ffn", "n2", "d_hifm", "n_h"}) {
    const auto spec = hhft::sweep_spec_from_json(
        {{"base", tiny_experiment()}, {"knob", knob}, {"multipliers", {1, 2, 3}}});
    const json base = hhft::to_json(spec.base.model);
    for (double m : {2.0, 3.0}) {
      const int v = static_cast<int>(std::lround(hhft::knob_value(spec.base.model, spec.knob) * m));
      const json point = hhft::to_json(hhft::with_knob(spec.base.model, spec.knob, v));
      const auto diff = json_leaves_differing(base, point);
      EXPECT_EQ(diff.size(), 1u) << knob;
    }
  }
  // d_trfm is the token width: the single model field "d"
  const auto spec = hhft::sweep_spec_from_json({{"base", tiny_experiment()}, {"knob", "d_trfm"}});
  const auto diff = json_leaves_differing(hhft::to_json(spec.base.model),
                                          hhft::to_json(hhft::with_knob(spec.base.model, Knob::kDTrfm, 16)));
  ASSERT_EQ(diff.size(), 1u);
  EXPECT_EQ(diff[0], "/d");
}

TEST(Sweep, WidthSweepParamsMatchEnumerationAndIncrease) {
  const auto spec = hhft::sweep_spec_from_json(
      {{"base", tiny_experiment()}, {"knob", "d_trfm"}, {"multipliers", {2, 0.5, 1}}});
  EXPECT_EQ(spec.multipliers, (std::vector<double>{0.5, 1, 2}));
  const auto data = hhft::load_experiment_data(spec.base);
  const auto pts = hhft::run_sweep(spec, data);
  ASSERT_EQ(pts.size(), 3u);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(pts[i].params, hhft::Model<float>(pts[i].config.model).param_count());
    if (i > 0) {
      EXPECT_GT(pts[i].params.dense, pts[i - 1].params.dense);
    }
  }
  const std::string csv = hhft::sweep_csv(spec, pts);
  EXPECT_EQ(csv.rfind("knob,multiplier,value,dense_params,auc_mean,auc_std,flops\nd_trfm,0.5,4,", 0), 0u) << csv;
}

TEST(Sweep, SingleMultiplierMatchesPlainRun) {
  const auto spec = hhft::sweep_spec_from_json({{"base", tiny_experiment()}, {"knob", "n1"}, {"multipliers", {1}}});
  const auto data = hhft::load_experiment_data(spec.base);
  const auto pts = hhft::run_sweep(spec, data);
  const auto runs = hhft::run_seeds(spec.base, data);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].auc.mean, runs[0].report.final_auc);
  EXPECT_EQ(hhft::to_json(pts[0].runs[0].report).at("epochs"), hhft::to_json(runs[0].report).at("epochs"));
}

TEST(Report, MergeAndCollision) {
  const auto c = hhft::experiment_config_from_json(tiny_experiment("mlp"));
  const auto data = hhft::load_experiment_data(c);
  const auto runs = hhft::run_seeds(c, data);
  const auto a = temp_dir("report_a"), b = temp_dir("report_b");
  hhft::write_runs(a, c, runs, std::nullopt);
  auto other = c;
  other.run_id = "tiny-2";
  hhft::write_runs(b, other, runs, 0.8);

  const json one = hhft::merge_reports({a});
  EXPECT_EQ(one.at("runs").at("tiny"), hhft::read_json_file(a / "summary.json"));
  const json two = hhft::merge_reports({a, b});
  EXPECT_EQ(two.at("runs").size(), 2u);
  const std::string csv = hhft::merged_csv(two);
  EXPECT_NE(csv.find("\ntiny,mlp,"), std::string::npos);
  EXPECT_NE(csv.find("\ntiny-2,mlp,"), std::string::npos);

  const auto dup = temp_dir("report_dup");
  hhft::write_runs(dup, c, runs, std::nullopt);
  try {
    hhft::merge_reports({a, dup});
    FAIL();
  } catch (const hhft::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'tiny'"), std::string::npos) << e.what();
  }
}
