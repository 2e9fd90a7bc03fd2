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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hhft/experiment.hpp"

namespace fs = std::filesystem;
using namespace hhft;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;
  std::optional<fs::path> out_dir;
  int parallel = 1;
};

fs::path out_or(const Globals& g, const fs::path& fallback) { return g.out_dir ? *g.out_dir : fallback; }

void apply_overrides(const Globals& g, ExperimentConfig& c) {
  if (g.seed) c.seeds = {*g.seed};
  if (g.precision) c.train.precision = precision_from_string(*g.precision);
}

ExperimentConfig load_experiment(const fs::path& path, const Globals& g) {
  ExperimentConfig c = experiment_config_from_json(read_json_file(path), path.parent_path());
  apply_overrides(g, c);
  return c;
}

void print_bayes(std::optional<double> bayes) {
  if (bayes) std::printf("bayes_auc %.6f\n", *bayes);
}

int cmd_generate(const fs::path& config_path, const Globals& g) {
  GeneratorConfig c = generator_config_from_json(read_json_file(config_path));
  if (g.seed) c.seed = *g.seed;
  const Dataset d = generate(c, g.parallel);
  const fs::path out = out_or(g, "data");
  write_dataset(d, out);
  std::printf("wrote %zu records (%zu train, %zu eval) to %s\n", d.train.size() + d.eval.size(), d.train.size(),
              d.eval.size(), out.string().c_str());
  return 0;
}

int cmd_train(const fs::path& config_path, const Globals& g) {
  const ExperimentConfig c = load_experiment(config_path, g);
  const Dataset data = load_experiment_data(c);
  const fs::path out = out_or(g, fs::path("runs") / c.run_id);
  const auto runs = run_seeds(c, data, g.parallel, &out);
  const auto bayes = oracle_auc(data);
  write_runs(out, c, runs, bayes);
  std::vector<double> aucs;
  for (const auto& r : runs) {
    std::printf("seed %llu  final_auc %.6f  best_auc %.6f (epoch %d)\n", static_cast<unsigned long long>(r.seed),
                r.report.final_auc, r.report.best_auc, r.report.best_epoch);
    aucs.push_back(r.report.final_auc);
  }
  const Aggregate a = aggregate(aucs);
  std::printf("%s  auc %.6f +- %.6f\n", c.run_id.c_str(), a.mean, a.std);
  print_bayes(bayes);
  return 0;
}

int cmd_ablate(const fs::path& config_path, const Globals& g) {
  const ExperimentConfig c = load_experiment(config_path, g);
  const Dataset data = load_experiment_data(c);
  const auto rungs = run_ablation(c, data, g.parallel);
  const auto bayes = oracle_auc(data);
  const fs::path out = out_or(g, "ablation");
  write_ablation(out, rungs, bayes);
  std::printf("%-20s %10s %10s %12s\n", "rung", "auc", "std", "gain vs mlp");
  for (const auto& r : rungs)
    std::printf("%-20s %10.6f %10.6f %+12.6f\n", r.name.c_str(), r.auc.mean, r.auc.std, r.delta_vs_mlp);
  print_bayes(bayes);
  return 0;
}

int cmd_sweep(const fs::path& spec_path, const Globals& g) {
  SweepSpec spec = sweep_spec_from_json(read_json_file(spec_path), spec_path.parent_path());
  apply_overrides(g, spec.base);
  const Dataset data = load_experiment_data(spec.base);
  const auto points = run_sweep(spec, data, g.parallel);
  const fs::path out = out_or(g, "sweep");
  write_sweep(out, spec, points);
  std::fputs(sweep_csv(spec, points).c_str(), stdout);
  print_bayes(oracle_auc(data));
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const Globals& g) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  const nlohmann::json merged = merge_reports(paths);
  const fs::path out = out_or(g, "report");
  write_text(out / "report.json", merged.dump(2) + "\n");
  const std::string csv = merged_csv(merged);
  write_text(out / "report.csv", csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous hierarchical transformer CTR desk"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  std::string precision;
  std::string out_dir;
  auto* seed_opt = app.add_option("--seed", seed, "Override the seed (generator seed or seed list)");
  auto* prec_opt = app.add_option("--precision", precision, "Training precision")->check(CLI::IsMember({"f32", "f64"}));
  auto* out_opt = app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--parallel", g.parallel, "Worker threads for independent runs")->check(CLI::Range(1, 256));

  std::string config;
  std::vector<std::string> run_dirs;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("config", config, "Generator config (JSON)")->required();
  auto* trn = app.add_subcommand("train", "Train one configuration over its seeds");
  trn->add_option("config", config, "Experiment config (JSON)")->required();
  auto* abl = app.add_subcommand("ablate", "Train the ablation ladder");
  abl->add_option("config", config, "Experiment config (JSON)")->required();
  auto* swp = app.add_subcommand("sweep", "Scale one knob over multipliers");
  swp->add_option("spec", config, "Sweep spec (JSON)")->required();
  auto* rep = app.add_subcommand("report", "Merge run directories");
  rep->add_option("run_dirs", run_dirs, "Run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (*seed_opt) g.seed = seed;
  if (*prec_opt) g.precision = precision;
  if (*out_opt) g.out_dir = out_dir;

  try {
    if (*gen) return cmd_generate(config, g);
    if (*trn) return cmd_train(config, g);
    if (*abl) return cmd_ablate(config, g);
    if (*swp) return cmd_sweep(config, g);
    if (*rep) return cmd_report(run_dirs, g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.user_facing() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
