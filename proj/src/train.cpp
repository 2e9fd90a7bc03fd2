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

#include "hhft/train.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

#include "hhft/metrics.hpp"
#include "hhft/random.hpp"

namespace hhft {

std::string to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  throw ConfigError("unknown precision '" + s + "' (expected f32 or f64)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(lr >= 0)) throw ConfigError("train: lr must be >= 0");
  if (!(warmup_frac >= 0 && warmup_frac <= 1)) throw ConfigError("train: warmup_frac must lie in [0, 1]");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (eval_batch_size < 1) throw ConfigError("train: eval_batch_size must be >= 1");
  if (eval_threads < 1) throw ConfigError("train: eval_threads must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},   {"epochs", c.epochs},
          {"lr", c.lr},                   {"schedule", to_string(c.schedule)},
          {"warmup_frac", c.warmup_frac}, {"beta1", c.beta1},
          {"beta2", c.beta2},             {"eps", c.eps},
          {"seed", c.seed},               {"precision", to_string(c.precision)},
          {"eval_every", c.eval_every},   {"eval_batch_size", c.eval_batch_size}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.schedule = schedule_from_string(j.value("schedule", to_string(c.schedule)));
    c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.seed = j.value("seed", c.seed);
    c.precision = precision_from_string(j.value("precision", to_string(c.precision)));
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"eval_auc", opt(e.eval_auc)},
                      {"eval_logloss", opt(e.eval_logloss)}});
  return {{"config", r.config},
          {"epochs", epochs},
          {"steps", r.steps},
          {"init_auc", r.init_auc},
          {"final_auc", r.final_auc},
          {"final_logloss", r.final_logloss},
          {"best_auc", r.best_auc},
          {"best_epoch", r.best_epoch},
          {"params", {{"dense", r.params.dense}, {"embedding", r.params.embedding}}},
          {"flops", r.flops}};
}

std::string epochs_csv(const RunReport& r) {
  std::string out = "epoch,train_loss,eval_auc,eval_logloss\n";
  for (const auto& e : r.epochs) {
    out += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," + (e.eval_auc ? fmt(*e.eval_auc) : "") + "," +
           (e.eval_logloss ? fmt(*e.eval_logloss) : "") + "\n";
  }
  return out;
}

std::string timing_csv(const RunReport& r) {
  std::string out = "epoch,seconds\n";
  for (const auto& e : r.epochs) out += std::to_string(e.epoch) + "," + fmt(e.seconds) + "\n";
  return out;
}

template <class T>
EvalResult evaluate(const Model<T>& model, std::span<const ExampleRecord> records, int batch_size, int threads) {
  const std::size_t n = records.size();
  const auto bs = static_cast<std::size_t>(batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  EvalResult res;
  res.logits.assign(n, 0.0);
  // Whole batches per shard, so the result does not depend on `threads`.
  auto run = [&](std::size_t b_lo, std::size_t b_hi) {
    std::vector<const ExampleRecord*> ptrs;
    for (std::size_t b = b_lo; b < b_hi; ++b) {
      const std::size_t lo = b * bs, hi = std::min(n, lo + bs);
      ptrs.clear();
      for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&records[i]);
      const Tensor<T> z = model.logits(ptrs);
      for (std::size_t i = lo; i < hi; ++i) res.logits[i] = static_cast<double>(z[i - lo]);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                                                       std::max<std::size_t>(batches, 1));
  if (workers == 1) {
    run(0, batches);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, batches * w / workers, batches * (w + 1) / workers);
  }
  std::vector<int> labels(n);
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = records[i].label;
    probs[i] = 1.0 / (1.0 + std::exp(-res.logits[i]));
  }
  res.auc = auc(res.logits, labels);
  res.logloss = logloss(probs, labels);
  return res;
}

template <class T>
RunReport train(Model<T>& model, const Dataset& data, const TrainConfig& config,
                const std::filesystem::path* best_checkpoint) {
  config.validate();
  if (data.schema.blocks != model.config().schema.blocks)
    throw SchemaError("dataset schema does not match the model schema");
  if (data.train.empty()) throw DataError("training set is empty");
  if (data.eval.empty()) throw DataError("evaluation set is empty");
  for (const auto& r : data.train) {
    try {
      validate_record(data.schema, r);
    } catch (const IndexError& e) {
      throw IndexError("record " + std::to_string(r.index) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError("record " + std::to_string(r.index) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError("record " + std::to_string(r.index) + ": " + e.what());
    }
  }

  RunReport report;
  report.params = model.param_count();
  report.flops = model.flops_estimate(1);

  const auto n = data.train.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n + bs - 1) / bs);
  const std::int64_t total_steps = steps_per_epoch * config.epochs;

  Adam<T> adam(model.params(), {config.lr, config.beta1, config.beta2, config.eps});

  const EvalResult init = evaluate(model, data.eval, config.eval_batch_size, config.eval_threads);
  report.init_auc = init.auc;
  report.best_auc = init.auc;
  report.final_auc = init.auc;
  report.final_logloss = init.logloss;
  report.best_epoch = 0;
  if (best_checkpoint != nullptr) save_checkpoint(model, *best_checkpoint);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<const ExampleRecord*> batch;
  std::vector<T> labels;
  std::vector<Tensor<T>> grads(model.params().size());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(config.seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0;
    for (std::size_t lo = 0; lo < n; lo += bs) {
      const std::size_t hi = std::min(n, lo + bs);
      batch.clear();
      labels.clear();
      for (std::size_t i = lo; i < hi; ++i) {
        batch.push_back(&data.train[order[i]]);
        labels.push_back(static_cast<T>(data.train[order[i]].label));
      }
      Tape<T> tape;
      std::vector<Var<T>> bound;
      const Var<T> logits = model.forward(tape, batch, &bound);
      const Var<T> loss = bce_with_logits(logits, std::span<const T>(labels));
      tape.backward(loss);
      for (std::size_t p = 0; p < bound.size(); ++p) grads[p] = tape.grad(bound[p]);
      adam.step(model.params(), grads, learning_rate(config.schedule, config.lr, report.steps, total_steps,
                                                     config.warmup_frac));
      ++report.steps;
      loss_sum += static_cast<double>(loss.value().item()) * static_cast<double>(hi - lo);
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(n);
    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      const EvalResult ev = evaluate(model, data.eval, config.eval_batch_size, config.eval_threads);
      row.eval_auc = ev.auc;
      row.eval_logloss = ev.logloss;
      report.final_auc = ev.auc;
      report.final_logloss = ev.logloss;
      if (ev.auc > report.best_auc) {
        report.best_auc = ev.auc;
        report.best_epoch = epoch;
        if (best_checkpoint != nullptr) save_checkpoint(model, *best_checkpoint);
      }
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(row);
  }
  return report;
}

template EvalResult evaluate<float>(const Model<float>&, std::span<const ExampleRecord>, int, int);
template EvalResult evaluate<double>(const Model<double>&, std::span<const ExampleRecord>, int, int);
template RunReport train<float>(Model<float>&, const Dataset&, const TrainConfig&, const std::filesystem::path*);
template RunReport train<double>(Model<double>&, const Dataset&, const TrainConfig&, const std::filesystem::path*);

}  // namespace hhft
