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

#include "hhft/datagen.hpp"
#include "hhft/model.hpp"
#include "hhft/optim.hpp"

namespace hhft {

enum class Precision { kF32, kF64 };

std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

struct TrainConfig {
  int batch_size = 256;
  int epochs = 5;
  double lr = 3e-3;
  Schedule schedule = Schedule::kWarmupLinearDecay;
  double warmup_frac = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Shuffling seed.
  std::uint64_t seed = 1;
  Precision precision = Precision::kF32;
  // Evaluate after every `eval_every` epochs and always after the last one.
  int eval_every = 1;
  int eval_batch_size = 1024;
  // Evaluation shards; results do not depend on this.
  int eval_threads = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRow {
  int epoch = 0;
  double train_loss = 0;
  std::optional<double> eval_auc;
  std::optional<double> eval_logloss;
  double seconds = 0;
};

struct RunReport {
  nlohmann::json config;  // echo, filled by the caller
  std::vector<EpochRow> epochs;
  std::int64_t steps = 0;
  double init_auc = 0;
  double final_auc = 0;
  double best_auc = 0;
  int best_epoch = 0;
  double final_logloss = 0;
  ParamCount params;
  std::uint64_t flops = 0;
};

// Everything except wall time, so equal inputs give equal bytes.
nlohmann::json to_json(const RunReport& r);
// epoch,train_loss,eval_auc,eval_logloss
std::string epochs_csv(const RunReport& r);
// epoch,seconds
std::string timing_csv(const RunReport& r);

struct EvalResult {
  double auc = 0;
  double logloss = 0;
  std::vector<double> logits;
};

template <class T>
EvalResult evaluate(const Model<T>& model, std::span<const ExampleRecord> records, int batch_size = 1024,
                    int threads = 1);

// Adam on mean BCE over shuffled minibatches. When `best_checkpoint` is set,
// the model is saved there each time the evaluation AUC improves.
template <class T>
RunReport train(Model<T>& model, const Dataset& data, const TrainConfig& config,
                const std::filesystem::path* best_checkpoint = nullptr);

}  // namespace hhft
