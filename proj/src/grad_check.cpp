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

#include "hhft/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace hhft {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor<double>>& params) {
  Tape<double> tape(false);
  std::vector<Var<double>> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  return f(tape, vars).value().item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor<double>>& params, double step, double tol) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    Var<double> loss = f(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + step;
      const double up = evaluate(f, params);
      params[p][i] = saved - step;
      const double down = evaluate(f, params);
      params[p][i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.coordinates;
      if (rel > report.max_rel_err || report.coordinates == 1) {
        report.max_rel_err = rel;
        report.param = p;
        report.index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace hhft
