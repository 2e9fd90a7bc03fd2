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

#include "hhft/optim.hpp"

#include <algorithm>
#include <cmath>

namespace hhft {

template <class T>
Adam<T>::Adam(const ParamStore<T>& store, AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg.beta1 >= 0 && cfg.beta1 < 1) || !(cfg.beta2 >= 0 && cfg.beta2 < 1) || !(cfg.eps > 0))
    throw ConfigError("adam: betas must lie in [0, 1) and eps must be > 0");
  for (std::size_t i = 0; i < store.size(); ++i) {
    m_.emplace_back(store.tensor(i).shape());
    v_.emplace_back(store.tensor(i).shape());
  }
}

template <class T>
void Adam<T>::step(ParamStore<T>& store, const std::vector<Tensor<T>>& grads, double lr) {
  if (grads.size() != store.size())
    throw ContractError("adam: " + std::to_string(grads.size()) + " gradients for " + std::to_string(store.size()) +
                        " parameters");
  for (std::size_t i = 0; i < store.size(); ++i)
    if (grads[i].shape() != store.tensor(i).shape())
      throw ContractError("adam: gradient shape " + shape_str(grads[i].shape()) + " does not match parameter '" +
                          store.info(i).name + "' " + shape_str(store.tensor(i).shape()));
  ++step_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto p = store.tensor(i).data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / c1;
      const double vhat = vj / c2;
      p[j] = static_cast<T>(p[j] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

std::string to_string(Schedule s) { return s == Schedule::kConstant ? "constant" : "warmup-linear-decay"; }

Schedule schedule_from_string(const std::string& s) {
  if (s == "constant") return Schedule::kConstant;
  if (s == "warmup-linear-decay") return Schedule::kWarmupLinearDecay;
  throw ConfigError("unknown lr schedule '" + s + "' (expected constant or warmup-linear-decay)");
}

double learning_rate(Schedule s, double base, std::int64_t step, std::int64_t total, double warmup_frac) {
  if (s == Schedule::kConstant || total <= 0) return base;
  const auto warmup = static_cast<std::int64_t>(std::ceil(warmup_frac * static_cast<double>(total)));
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const std::int64_t rest = total - warmup;
  if (rest <= 0) return base;
  const double frac = static_cast<double>(step - warmup) / static_cast<double>(rest);
  return base * std::max(0.0, 1.0 - frac);
}

}  // namespace hhft
