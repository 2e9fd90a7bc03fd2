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

#include "hhft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hhft/error.hpp"

namespace hhft {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw MetricError("auc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) + " labels");
  const std::size_t n = scores.size();
  std::uint64_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw MetricError("auc: labels must be 0 or 1");
    pos += static_cast<std::uint64_t>(y);
  }
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc is undefined: labels contain a single class");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the positive rank sum, with tie groups at their average rank
  // (first + last over 2, 1-based), stays integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::uint64_t group_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) group_pos += static_cast<std::uint64_t>(labels[order[j++]]);
    twice_rank_sum += group_pos * (static_cast<std::uint64_t>(i + 1) + static_cast<std::uint64_t>(j));
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double logloss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size() || probs.empty())
    throw MetricError("logloss: size mismatch or empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-15, 1.0 - 1e-15);
    total -= labels[i] == 1 ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(probs.size());
}

}  // namespace hhft
