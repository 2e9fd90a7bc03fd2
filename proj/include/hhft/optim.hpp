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
#include <string>
#include <vector>

#include "hhft/params.hpp"

namespace hhft {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
class Adam {
 public:
  Adam(const ParamStore<T>& store, AdamConfig cfg);

  // One bias-corrected update with learning rate `lr`. grads[i] must have
  // the shape of parameter i.
  void step(ParamStore<T>& store, const std::vector<Tensor<T>>& grads, double lr);

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const Tensor<T>& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor<T>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::int64_t step_ = 0;
};

enum class Schedule { kConstant, kWarmupLinearDecay };

std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

// Learning rate at optimizer step `step` (0-based) of `total`.
// Warmup ramps linearly to `base` over the first warmup_frac of steps, then
// decays linearly to zero.
double learning_rate(Schedule s, double base, std::int64_t step, std::int64_t total, double warmup_frac);

}  // namespace hhft
