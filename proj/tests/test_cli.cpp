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

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(HHFT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  Result r;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "hhft_test_cli" /
           ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  static json schema() {
    json blocks = json::array();
    for (const char* name : {"user", "item", "query"})
      blocks.push_back({{"name", name}, {"kind", "categorical"}, {"vocab_sizes", {8}}, {"field_dims", {8}}, {"e_k", 8}});
    return {{"d", 8}, {"blocks", blocks}};
  }
  static json generator(int records = 400) {
    return {{"seed", 3},
            {"schema", schema()},
            {"records", records},
            {"flip_prob", 0.1},
            {"interactions", {{{"blocks", {"user", "item"}}, {"strength", 3}}}}};
  }
  static json experiment(const std::string& variant, const std::string& run_id) {
    return {{"run_id", run_id},
            {"model", {{"variant", variant}, {"schema", schema()}, {"d", 8}, {"d_ffn", 8}, {"n_heads", 2},
                       {"d_h", 2}, {"n_h", 2}, {"head_hidden", {8}}}},
            {"train", {{"epochs", 2}, {"batch_size", 64}}},
            {"dataset", "data"},
            {"seeds", {1}}};
  }

  fs::path dir_;
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(Cli, GenerateWritesHeaderAndRecords) {
  spit(dir_ / "gen.json", generator(500).dump());
  const auto r = run("--out-dir " + path("data") + " generate " + path("gen.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const json header = json::parse(slurp(dir_ / "data" / "header.json"));
  const std::string records = slurp(dir_ / "data" / "records.jsonl");
  EXPECT_EQ(count_lines(records), 500u);
  EXPECT_EQ(records.find('\r'), std::string::npos);
  EXPECT_NE(header.dump().find("500"), std::string::npos);
  std::istringstream lines(records);
  std::string line;
  std::getline(lines, line);
  const json first = json::parse(line);
  EXPECT_TRUE(first.contains("label"));
  EXPECT_TRUE(first.contains("user"));
}

TEST_F(Cli, GenerateIsByteIdenticalOnRerun) {
  spit(dir_ / "gen.json", generator().dump());
  ASSERT_EQ(run("--out-dir " + path("a") + " generate " + path("gen.json")).code, 0);
  ASSERT_EQ(run("--parallel 3 --out-dir " + path("b") + " generate " + path("gen.json")).code, 0);
  for (const char* f : {"header.json", "records.jsonl"}) EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
}

TEST_F(Cli, GenerateSeedOverrideChangesData) {
  spit(dir_ / "gen.json", generator().dump());
  ASSERT_EQ(run("--out-dir " + path("a") + " generate " + path("gen.json")).code, 0);
  ASSERT_EQ(run("--seed 4 --out-dir " + path("b") + " generate " + path("gen.json")).code, 0);
  EXPECT_NE(slurp(dir_ / "a" / "records.jsonl"), slurp(dir_ / "b" / "records.jsonl"));
}

TEST_F(Cli, MalformedConfigExitsTwoWithLine) {
  spit(dir_ / "gen.json", "{\n  \"seed\": 1,\n  \"records\": ,\n}\n");
  const auto r = run("--out-dir " + path("data") + " generate " + path("gen.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 3"), std::string::npos) << r.output;
}

TEST_F(Cli, InvalidConfigValueExitsTwo) {
  json g = generator();
  g["flip_prob"] = 0.7;
  spit(dir_ / "gen.json", g.dump());
  const auto r = run("--out-dir " + path("data") + " generate " + path("gen.json"));
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST_F(Cli, UnknownSubcommandExitsTwo) { EXPECT_EQ(run("frobnicate").code, 2); }

TEST_F(Cli, TrainMlpOnTinyData) {
  spit(dir_ / "gen.json", generator().dump());
  ASSERT_EQ(run("--out-dir " + path("data") + " generate " + path("gen.json")).code, 0);
  spit(dir_ / "exp.json", experiment("mlp", "tiny").dump());
  const auto r = run("--out-dir " + path("run") + " train " + path("exp.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const json report = json::parse(slurp(dir_ / "run" / "seed_1" / "report.json"));
  EXPECT_GE(report.at("epochs").size(), 1u);
  const std::string epochs = slurp(dir_ / "run" / "seed_1" / "epochs.csv");
  EXPECT_GE(count_lines(epochs), 2u);
  EXPECT_NE(r.output.find("bayes_auc"), std::string::npos);
}

TEST_F(Cli, MissingDatasetExitsTwoNamingPath) {
  json e = experiment("mlp", "tiny");
  e["dataset"] = "no_such_dataset";
  spit(dir_ / "exp.json", e.dump());
  const auto r = run("--out-dir " + path("run") + " train " + path("exp.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("no_such_dataset"), std::string::npos) << r.output;
}

TEST_F(Cli, ThreeSeedsAggregateMatchesPerSeedFiles) {
  spit(dir_ / "gen.json", generator().dump());
  ASSERT_EQ(run("--out-dir " + path("data") + " generate " + path("gen.json")).code, 0);
  json e = experiment("hhft", "three");
  e["seeds"] = {1, 2, 3};
  spit(dir_ / "exp.json", e.dump());
  const auto r = run("--parallel 2 --out-dir " + path("run") + " train " + path("exp.json"));
  ASSERT_EQ(r.code, 0) << r.output;

  std::vector<double> aucs;
  for (int s = 1; s <= 3; ++s) {
    const fs::path rep = dir_ / "run" / ("seed_" + std::to_string(s)) / "report.json";
    ASSERT_TRUE(fs::exists(rep));
    aucs.push_back(json::parse(slurp(rep)).at("final_auc").get<double>());
  }
  double mean = 0;
  for (double a : aucs) mean += a;
  mean /= 3;
  double ss = 0;
  for (double a : aucs) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / 2);

  std::istringstream csv(slurp(dir_ / "run" / "aggregate.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "seed,final_auc,best_auc,final_logloss");
  bool saw_mean = false, saw_std = false;
  while (std::getline(csv, line)) {
    const auto comma = line.find(',');
    const std::string key = line.substr(0, comma);
    const std::string rest = line.substr(comma + 1);
    const double first = std::stod(rest.substr(0, rest.find(',')));
    if (key == "mean") {
      saw_mean = true;
      EXPECT_NEAR(first, mean, 1e-12);
    } else if (key == "std") {
      saw_std = true;
      EXPECT_NEAR(first, sd, 1e-12);
    }
  }
  EXPECT_TRUE(saw_mean);
  EXPECT_TRUE(saw_std);
}

TEST_F(Cli, ReportMergesAndRejectsCollisions) {
  spit(dir_ / "gen.json", generator().dump());
  ASSERT_EQ(run("--out-dir " + path("data") + " generate " + path("gen.json")).code, 0);
  spit(dir_ / "a.json", experiment("mlp", "alpha").dump());
  spit(dir_ / "b.json", experiment("shared-transformer", "beta").dump());
  ASSERT_EQ(run("--out-dir " + path("ra") + " train " + path("a.json")).code, 0);
  ASSERT_EQ(run("--out-dir " + path("rb") + " train " + path("b.json")).code, 0);
  ASSERT_EQ(run("--out-dir " + path("rc") + " train " + path("a.json")).code, 0);

  const auto ok = run("--out-dir " + path("merged") + " report " + path("ra") + " " + path("rb"));
  ASSERT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("alpha,mlp,"), std::string::npos) << ok.output;
  EXPECT_NE(ok.output.find("beta,shared-transformer,"), std::string::npos) << ok.output;
  EXPECT_TRUE(fs::exists(dir_ / "merged" / "report.json"));

  const auto clash = run("--out-dir " + path("merged2") + " report " + path("ra") + " " + path("rc"));
  EXPECT_EQ(clash.code, 2);
  EXPECT_NE(clash.output.find("alpha"), std::string::npos) << clash.output;
}

TEST_F(Cli, SweepRejectsMultipleKnobs) {
  json spec = {{"base", experiment("hhft", "s")}, {"knobs", {"n1", "n2"}}};
  spit(dir_ / "sweep.json", spec.dump());
  const auto r = run("--out-dir " + path("sw") + " sweep " + path("sweep.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("keeping other parameters fixed"), std::string::npos) << r.output;
}

TEST_F(Cli, SweepWritesCsv) {
  spit(dir_ / "gen.json", generator().dump());
  ASSERT_EQ(run("--out-dir " + path("data") + " generate " + path("gen.json")).code, 0);
  json spec = {{"base", experiment("hhft", "s")}, {"knob", "n1"}, {"multipliers", {1, 2}}};
  spit(dir_ / "sweep.json", spec.dump());
  const auto r = run("--out-dir " + path("sw") + " sweep " + path("sweep.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string csv = slurp(dir_ / "sw" / "sweep.csv");
  EXPECT_EQ(count_lines(csv), 3u) << csv;
}
