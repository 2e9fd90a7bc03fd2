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

#include <span>

namespace hhft {

// Probability that a random positive outscores a random negative, ties
// counted 1/2. Sort-rank method, O(N log N). Throws MetricError unless both
// classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

// Mean negative log-likelihood of labels under probabilities, clamped to
// [1e-15, 1 - 1e-15].
double logloss(std::span<const double> probs, std::span<const int> labels);

}  // namespace hhft
