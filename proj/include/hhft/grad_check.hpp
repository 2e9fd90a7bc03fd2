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

#include <functional>
#include <span>
#include <vector>

#include "hhft/autodiff.hpp"

namespace hhft {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  // Worst coordinate.
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

using ScalarFn = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

// Compares tape gradients of `f` against central finite differences over
// every coordinate of `params`. Relative error of one coordinate is
// |a - n| / max(|a|, |n|, 1e-8). `params` is perturbed in place and restored.
GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor<double>>& params, double step = 1e-5,
                           double tol = 1e-4);

}  // namespace hhft
