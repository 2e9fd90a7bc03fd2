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

#include "hhft/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

namespace hhft {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// Runs f(0..n-1) on up to `parallel` threads; rethrows the first failure in
// index order.
template <class F>
void parallel_for(std::size_t n, int parallel, F f) {
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::atomic<std::size_t>& next) {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(parallel, 1)), 1,
                                                       std::max<std::size_t>(n, 1));
  if (workers == 1) {
    work(next);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back([&] { work(next); });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const Error& e) {
    throw ContextError(context + ": " + e.what(), e.user_facing());
  } catch (const std::exception& e) {
    throw ContextError(context + ": " + e.what(), false);
  }
}

template <class T>
RunReport run_one(const ExperimentConfig& c, const Dataset& data, std::uint64_t seed,
                  const std::filesystem::path* ckpt) {
  Model<T> model(c.model);
  InitScheme init = c.init;
  init.seed = seed;
  init_params(model.params(), init);
  TrainConfig tc = c.train;
  tc.seed = seed;
  return train(model, data, tc, ckpt);
}

nlohmann::json seed_config(const ExperimentConfig& c, std::uint64_t seed) {
  nlohmann::json j = to_json(c);
  j.erase("seeds");
  j["seed"] = seed;
  return j;
}

double seconds_of(const RunReport& r) {
  double s = 0;
  for (const auto& e : r.epochs) s += e.seconds;
  return s;
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (dataset.has_value() == generator.has_value())
    throw ConfigError("experiment needs exactly one of 'dataset' (a path) or 'generator'");
  if (generator && generator->schema.blocks != model.schema.blocks)
    throw ConfigError("generator schema differs from the model schema");
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {{"run_id", c.run_id},
                      {"model", to_json(c.model)},
                      {"init", to_json(c.init)},
                      {"train", to_json(c.train)},
                      {"seeds", c.seeds}};
  j["init"].erase("seed");
  j["train"].erase("seed");
  if (c.dataset) j["dataset"] = c.dataset->string();
  if (c.generator) j["generator"] = to_json(*c.generator);
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    c.model = model_config_from_json(j.value("model", nlohmann::json::object()));
    c.init = init_scheme_from_json(j.value("init", nlohmann::json::object()));
    c.train = train_config_from_json(j.value("train", nlohmann::json::object()));
    c.run_id = j.value("run_id", to_string(c.model.variant));
    if (j.contains("dataset")) {
      std::filesystem::path p = j.at("dataset").get<std::string>();
      c.dataset = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    if (j.contains("generator")) {
      nlohmann::json g = j.at("generator");
      if (!g.contains("schema")) g["schema"] = to_json(c.model.schema);
      c.generator = generator_config_from_json(g);
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

Dataset load_experiment_data(const ExperimentConfig& c) {
  if (c.generator) return generate(*c.generator);
  if (!std::filesystem::exists(*c.dataset)) throw DataError("dataset path does not exist: " + c.dataset->string());
  return read_dataset(*c.dataset);
}

std::optional<double> oracle_auc(const Dataset& data) {
  if (data.generator.is_null() || data.fingerprint.empty()) return std::nullopt;
  const GroundTruth truth(generator_config_from_json(data.generator));
  return bayes_auc(truth, data);
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  if (values.empty()) return a;
  double s = 0;
  for (double v : values) s += v;
  a.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

std::vector<SeedRun> run_seeds(const ExperimentConfig& c, const Dataset& data, int parallel,
                               const std::filesystem::path* checkpoint_dir) {
  c.validate();
  std::vector<SeedRun> runs(c.seeds.size());
  parallel_for(c.seeds.size(), parallel, [&](std::size_t i) {
    const std::uint64_t seed = c.seeds[i];
    try {
      std::optional<std::filesystem::path> ckpt;
      if (checkpoint_dir) {
        const auto sub = *checkpoint_dir / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(sub);
        ckpt = sub / "best.ckpt";
      }
      const auto* ck = ckpt ? &*ckpt : nullptr;
      runs[i].seed = seed;
      runs[i].report = c.train.precision == Precision::kF32 ? run_one<float>(c, data, seed, ck)
                                                            : run_one<double>(c, data, seed, ck);
      runs[i].report.config = seed_config(c, seed);
    } catch (...) {
      rethrow_with_context("run '" + c.run_id + "' seed " + std::to_string(seed));
    }
  });
  return runs;
}

void write_runs(const std::filesystem::path& dir, const ExperimentConfig& c, const std::vector<SeedRun>& runs,
                std::optional<double> bayes) {
  std::string agg = "seed,final_auc,best_auc,final_logloss\n";
  nlohmann::json per_seed = nlohmann::json::array();
  nlohmann::json timing = nlohmann::json::object();
  std::vector<double> fin, best, ll;
  for (const auto& r : runs) {
    const auto sub = dir / ("seed_" + std::to_string(r.seed));
    write_text(sub / "report.json", to_json(r.report).dump(2) + "\n");
    write_text(sub / "epochs.csv", epochs_csv(r.report));
    write_text(sub / "timing.csv", timing_csv(r.report));
    agg += std::to_string(r.seed) + "," + fmt(r.report.final_auc) + "," + fmt(r.report.best_auc) + "," +
           fmt(r.report.final_logloss) + "\n";
    fin.push_back(r.report.final_auc);
    best.push_back(r.report.best_auc);
    ll.push_back(r.report.final_logloss);
    per_seed.push_back({{"seed", r.seed},
                        {"init_auc", r.report.init_auc},
                        {"final_auc", r.report.final_auc},
                        {"best_auc", r.report.best_auc},
                        {"best_epoch", r.report.best_epoch},
                        {"final_logloss", r.report.final_logloss}});
    timing["seed_" + std::to_string(r.seed)] = seconds_of(r.report);
  }
  const Aggregate a_fin = aggregate(fin), a_best = aggregate(best), a_ll = aggregate(ll);
  agg += "mean," + fmt(a_fin.mean) + "," + fmt(a_best.mean) + "," + fmt(a_ll.mean) + "\n";
  agg += "std," + fmt(a_fin.std) + "," + fmt(a_best.std) + "," + fmt(a_ll.std) + "\n";
  write_text(dir / "aggregate.csv", agg);

  nlohmann::json summary = {{"run_id", c.run_id},
                            {"config", to_json(c)},
                            {"runs", per_seed},
                            {"auc_mean", a_fin.mean},
                            {"auc_std", a_fin.std},
                            {"bayes_auc", bayes ? nlohmann::json(*bayes) : nlohmann::json()}};
  if (!runs.empty()) {
    summary["params"] = {{"dense", runs[0].report.params.dense}, {"embedding", runs[0].report.params.embedding}};
    summary["flops"] = runs[0].report.flops;
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_text(dir / "metadata.json", nlohmann::json({{"seconds", timing}}).dump(2) + "\n");
}

std::vector<Rung> ablation_ladder(const ExperimentConfig& base) {
  auto rung = [&](std::string name, Variant v) {
    ExperimentConfig c = base;
    c.model.variant = v;
    c.run_id = name;
    return Rung{std::move(name), std::move(c)};
  };
  std::vector<Rung> out;
  out.push_back(rung("mlp", Variant::kMlp));
  out.push_back(rung("shared-transformer", Variant::kSharedTransformer));
  out.push_back(rung("hhft(n2=0)", Variant::kHhft));
  out.back().config.model.hiformer.n2 = 0;
  out.push_back(rung("hhft", Variant::kHhft));
  out.push_back(rung("hhft+init", Variant::kHhft));
  out.back().config.init.kind = InitKind::kZerosResidualOut;
  out.push_back(rung("hhft-scaled", Variant::kHhft));
  out.back().config.init.kind = InitKind::kZerosResidualOut;
  out.back().config.model = with_knob(out.back().config.model, Knob::kDTrfm, 2 * base.model.schema.d);
  return out;
}

std::vector<RungResult> run_ablation(const ExperimentConfig& base, const Dataset& data, int parallel) {
  const auto ladder = ablation_ladder(base);
  const std::size_t s = base.seeds.size();
  std::vector<RungResult> out(ladder.size());
  for (std::size_t r = 0; r < ladder.size(); ++r) {
    out[r].name = ladder[r].name;
    out[r].config = ladder[r].config;
    out[r].runs.resize(s);
  }
  parallel_for(ladder.size() * s, parallel, [&](std::size_t job) {
    const std::size_t r = job / s, i = job % s;
    ExperimentConfig one = ladder[r].config;
    one.seeds = {base.seeds[i]};
    try {
      out[r].runs[i] = run_seeds(one, data).at(0);
    } catch (...) {
      rethrow_with_context("rung '" + ladder[r].name + "'");
    }
  });
  for (auto& r : out) {
    std::vector<double> aucs;
    for (const auto& run : r.runs) aucs.push_back(run.report.final_auc);
    r.auc = aggregate(aucs);
  }
  for (auto& r : out) r.delta_vs_mlp = r.auc.mean - out[0].auc.mean;
  return out;
}

void write_ablation(const std::filesystem::path& dir, const std::vector<RungResult>& rungs,
                    std::optional<double> bayes) {
  std::string csv = "rung,name,auc_mean,auc_std,auc_gain_vs_mlp,dense_params,flops\n";
  nlohmann::json table = nlohmann::json::array();
  for (std::size_t i = 0; i < rungs.size(); ++i) {
    const auto& r = rungs[i];
    const ParamCount pc = param_count_formula(r.config.model);
    csv += std::to_string(i + 1) + "," + r.name + "," + fmt(r.auc.mean) + "," + fmt(r.auc.std) + "," +
           fmt(r.delta_vs_mlp) + "," + std::to_string(pc.dense) + "," +
           std::to_string(flops_formula(r.config.model)) + "\n";
    nlohmann::json aucs = nlohmann::json::array();
    for (const auto& run : r.runs) aucs.push_back({{"seed", run.seed}, {"final_auc", run.report.final_auc}});
    table.push_back({{"rung", i + 1},
                     {"name", r.name},
                     {"config", to_json(r.config)},
                     {"runs", aucs},
                     {"auc_mean", r.auc.mean},
                     {"auc_std", r.auc.std},
                     {"auc_gain_vs_mlp", r.delta_vs_mlp},
                     {"dense_params", pc.dense}});
    write_runs(dir / ("rung_" + std::to_string(i + 1)), r.config, r.runs, bayes);
  }
  write_text(dir / "ladder.csv", csv);
  write_text(dir / "ladder.json",
             nlohmann::json({{"rungs", table}, {"bayes_auc", bayes ? nlohmann::json(*bayes) : nlohmann::json()}})
                     .dump(2) +
                 "\n");
}

std::string to_string(Knob k) {
  switch (k) {
    case Knob::kN1:
      return "n1";
    case Knob::kDTrfm:
      return "d_trfm";
    case Knob::kDFfn:
      return "d_ffn";
    case Knob::kN2:
      return "n2";
    case Knob::kDHifm:
      return "d_hifm";
    case Knob::kNH:
      return "n_h";
  }
  return "?";
}

Knob knob_from_string(const std::string& s) {
  for (Knob k : {Knob::kN1, Knob::kDTrfm, Knob::kDFfn, Knob::kN2, Knob::kDHifm, Knob::kNH})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown sweep knob '" + s + "' (expected n1, d_trfm, d_ffn, n2, d_hifm or n_h)");
}

int knob_value(const ModelConfig& c, Knob k) {
  switch (k) {
    case Knob::kN1:
      return c.encoder.n1;
    case Knob::kDTrfm:
      return c.schema.d;
    case Knob::kDFfn:
      return c.encoder.d_ffn;
    case Knob::kN2:
      return c.hiformer.n2;
    case Knob::kDHifm:
      return c.hiformer.d_h;
    case Knob::kNH:
      return c.hiformer.n_h;
  }
  return 0;
}

ModelConfig with_knob(const ModelConfig& c, Knob k, int value) {
  ModelConfig out = c;
  switch (k) {
    case Knob::kN1:
      out.encoder.n1 = value;
      break;
    case Knob::kDTrfm:
      out.schema.d = value;
      out.encoder.d = value;
      break;
    case Knob::kDFfn:
      out.encoder.d_ffn = value;
      break;
    case Knob::kN2:
      out.hiformer.n2 = value;
      break;
    case Knob::kDHifm:
      out.hiformer.d_h = value;
      break;
    case Knob::kNH:
      out.hiformer.n_h = value;
      break;
  }
  out.validate();
  return out;
}

SweepSpec sweep_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  static const char* kOneKnob = "a sweep varies exactly one knob, keeping other parameters fixed";
  SweepSpec s;
  try {
    if (!j.is_object()) throw ConfigError("sweep spec must be a JSON object");
    if (j.contains("knobs")) {
      const auto& ks = j.at("knobs");
      if (!ks.is_array() || ks.size() != 1) throw ConfigError(std::string(kOneKnob) + "; got " + ks.dump());
      if (j.contains("knob")) throw ConfigError(std::string(kOneKnob) + "; both 'knob' and 'knobs' given");
    }
    nlohmann::json knob = j.contains("knobs") ? j.at("knobs").at(0) : j.at("knob");
    if (knob.is_array()) {
      if (knob.size() != 1) throw ConfigError(std::string(kOneKnob) + "; got " + knob.dump());
      knob = knob.at(0);
    }
    s.knob = knob_from_string(knob.get<std::string>());
    s.base = experiment_config_from_json(j.at("base"), base_dir);
    if (j.contains("multipliers")) s.multipliers = j.at("multipliers").get<std::vector<double>>();
    if (j.contains("seeds")) s.base.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed sweep spec: ") + e.what());
  }
  if (s.multipliers.empty()) throw ConfigError("sweep needs at least one multiplier");
  for (double m : s.multipliers)
    if (!(m > 0)) throw ConfigError("sweep multipliers must be > 0");
  std::sort(s.multipliers.begin(), s.multipliers.end());
  if (std::adjacent_find(s.multipliers.begin(), s.multipliers.end()) != s.multipliers.end())
    throw ConfigError("sweep multipliers must be distinct");
  s.base.validate();
  return s;
}

std::vector<SweepPoint> run_sweep(const SweepSpec& spec, const Dataset& data, int parallel) {
  std::vector<double> mults = spec.multipliers;
  std::sort(mults.begin(), mults.end());
  const int base_value = knob_value(spec.base.model, spec.knob);
  std::vector<SweepPoint> pts(mults.size());
  for (std::size_t i = 0; i < mults.size(); ++i) {
    auto& p = pts[i];
    p.multiplier = mults[i];
    p.value = static_cast<int>(std::lround(base_value * mults[i]));
    if (p.value < 1)
      throw ConfigError("knob " + to_string(spec.knob) + " x " + fmt(mults[i]) + " gives " + std::to_string(p.value));
    p.config = spec.base;
    p.config.model = with_knob(spec.base.model, spec.knob, p.value);
    p.config.run_id = spec.base.run_id + "-" + to_string(spec.knob) + "=" + std::to_string(p.value);
    p.params = param_count_formula(p.config.model);
    p.flops = flops_formula(p.config.model);
    p.runs.resize(spec.base.seeds.size());
  }
  const std::size_t s = spec.base.seeds.size();
  parallel_for(pts.size() * s, parallel, [&](std::size_t job) {
    const std::size_t r = job / s, i = job % s;
    ExperimentConfig one = pts[r].config;
    one.seeds = {spec.base.seeds[i]};
    pts[r].runs[i] = run_seeds(one, data).at(0);
  });
  for (auto& p : pts) {
    std::vector<double> aucs;
    for (const auto& run : p.runs) aucs.push_back(run.report.final_auc);
    p.auc = aggregate(aucs);
  }
  return pts;
}

std::string sweep_csv(const SweepSpec& spec, const std::vector<SweepPoint>& points) {
  std::string out = "knob,multiplier,value,dense_params,auc_mean,auc_std,flops\n";
  for (const auto& p : points)
    out += to_string(spec.knob) + "," + fmt(p.multiplier) + "," + std::to_string(p.value) + "," +
           std::to_string(p.params.dense) + "," + fmt(p.auc.mean) + "," + fmt(p.auc.std) + "," +
           std::to_string(p.flops) + "\n";
  return out;
}

void write_sweep(const std::filesystem::path& dir, const SweepSpec& spec, const std::vector<SweepPoint>& points) {
  write_text(dir / "sweep.csv", sweep_csv(spec, points));
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& p : points) {
    nlohmann::json aucs = nlohmann::json::array();
    for (const auto& run : p.runs) aucs.push_back({{"seed", run.seed}, {"final_auc", run.report.final_auc}});
    rows.push_back({{"multiplier", p.multiplier},
                    {"value", p.value},
                    {"model", to_json(p.config.model)},
                    {"dense_params", p.params.dense},
                    {"flops", p.flops},
                    {"runs", aucs},
                    {"auc_mean", p.auc.mean},
                    {"auc_std", p.auc.std}});
  }
  nlohmann::json j = {{"knob", to_string(spec.knob)}, {"base", to_json(spec.base)}, {"rows", rows}};
  write_text(dir / "sweep.json", j.dump(2) + "\n");
}

nlohmann::json merge_reports(const std::vector<std::filesystem::path>& run_dirs) {
  nlohmann::json runs = nlohmann::json::object();
  std::map<std::string, std::filesystem::path> seen;
  for (const auto& dir : run_dirs) {
    const auto path = dir / "summary.json";
    if (!std::filesystem::exists(path)) throw DataError("no summary.json in run directory " + dir.string());
    nlohmann::json s = read_json_file(path);
    const std::string id = s.value("run_id", "");
    if (id.empty()) throw DataError(path.string() + ": missing run_id");
    if (auto it = seen.find(id); it != seen.end())
      throw ConfigError("run id '" + id + "' appears in both " + it->second.string() + " and " + dir.string());
    seen[id] = dir;
    runs[id] = std::move(s);
  }
  return {{"runs", runs}};
}

std::string merged_csv(const nlohmann::json& merged) {
  std::string out = "run_id,variant,auc_mean,auc_std,dense_params,flops,bayes_auc\n";
  for (const auto& [id, s] : merged.at("runs").items()) {
    const auto& cfg = s.at("config");
    out += id + "," + cfg.at("model").value("variant", "") + "," + fmt(s.value("auc_mean", 0.0)) + "," +
           fmt(s.value("auc_std", 0.0)) + ",";
    out += s.contains("params") ? std::to_string(s.at("params").value("dense", std::size_t{0})) : "";
    out += ",";
    out += s.contains("flops") ? std::to_string(s.at("flops").get<std::uint64_t>()) : "";
    out += ",";
    if (s.contains("bayes_auc") && !s.at("bayes_auc").is_null()) out += fmt(s.at("bayes_auc").get<double>());
    out += "\n";
  }
  return out;
}

}  // namespace hhft
