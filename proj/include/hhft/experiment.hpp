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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhft/init.hpp"
#include "hhft/train.hpp"

namespace hhft {

struct ExperimentConfig {
  std::string run_id;
  ModelConfig model;
  InitScheme init;
  TrainConfig train;
  // Exactly one data source.
  std::optional<std::filesystem::path> dataset;
  std::optional<GeneratorConfig> generator;
  std::vector<std::uint64_t> seeds = {1};

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Relative dataset paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

// Parses a JSON file; syntax errors become ConfigError with the line number.
nlohmann::json read_json_file(const std::filesystem::path& path);

// Loads or generates the data an experiment refers to.
Dataset load_experiment_data(const ExperimentConfig& c);
// Bayes AUC when the data came from a known generator.
std::optional<double> oracle_auc(const Dataset& data);

struct SeedRun {
  std::uint64_t seed = 0;
  RunReport report;
};

struct Aggregate {
  double mean = 0;
  double std = 0;  // sample standard deviation, 0 for a single run
};

Aggregate aggregate(std::span<const double> values);

// One model per seed: init and shuffling both use the seed. `checkpoint_dir`
// receives seed_<s>/best.ckpt with the best model of each run.
std::vector<SeedRun> run_seeds(const ExperimentConfig& c, const Dataset& data, int parallel = 1,
                               const std::filesystem::path* checkpoint_dir = nullptr);

// Writes <dir>/seed_<s>/{report.json,epochs.csv,timing.csv}, aggregate.csv,
// summary.json and metadata.json (wall times).
void write_runs(const std::filesystem::path& dir, const ExperimentConfig& c, const std::vector<SeedRun>& runs,
                std::optional<double> bayes);

// Ablation ladder in fixed order.
struct Rung {
  std::string name;
  ExperimentConfig config;
};

std::vector<Rung> ablation_ladder(const ExperimentConfig& base);

struct RungResult {
  std::string name;
  ExperimentConfig config;
  std::vector<SeedRun> runs;
  Aggregate auc;
  double delta_vs_mlp = 0;
};

std::vector<RungResult> run_ablation(const ExperimentConfig& base, const Dataset& data, int parallel = 1);
void write_ablation(const std::filesystem::path& dir, const std::vector<RungResult>& rungs, std::optional<double> bayes);

// Scaling sweep over one knob.
enum class Knob { kN1, kDTrfm, kDFfn, kN2, kDHifm, kNH };

std::string to_string(Knob k);
Knob knob_from_string(const std::string& s);
int knob_value(const ModelConfig& c, Knob k);
// Copy of `c` with the knob set to `value`.
ModelConfig with_knob(const ModelConfig& c, Knob k, int value);

struct SweepSpec {
  ExperimentConfig base;
  Knob knob = Knob::kDTrfm;
  std::vector<double> multipliers = {0.5, 1, 2, 4};
};

SweepSpec sweep_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

struct SweepPoint {
  double multiplier = 1;
  int value = 0;
  ExperimentConfig config;
  std::vector<SeedRun> runs;
  Aggregate auc;
  ParamCount params;
  std::uint64_t flops = 0;
};

// Rows sorted by multiplier.
std::vector<SweepPoint> run_sweep(const SweepSpec& spec, const Dataset& data, int parallel = 1);
// knob,multiplier,value,dense_params,auc_mean,auc_std,flops
std::string sweep_csv(const SweepSpec& spec, const std::vector<SweepPoint>& points);
void write_sweep(const std::filesystem::path& dir, const SweepSpec& spec, const std::vector<SweepPoint>& points);

// Merges summary.json files from run directories into one table keyed by run
// id. Throws ConfigError on a repeated run id.
nlohmann::json merge_reports(const std::vector<std::filesystem::path>& run_dirs);
std::string merged_csv(const nlohmann::json& merged);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hhft
