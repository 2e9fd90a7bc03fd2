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

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "hhft/params.hpp"

namespace hhft {

enum class InitKind { kXavierUniform, kXavierNormal, kTruncatedNormal, kZerosResidualOut };

std::string to_string(InitKind k);
InitKind init_kind_from_string(const std::string& s);

// Weight initialization recipe.
//  - Dense weights follow `kind`, using the fan sizes of each independent
//    slice. zeros-residual-out is xavier-uniform with the last projection of
//    every residual branch (attention output, second FFN layer and its bias)
//    set to zero.
//  - Embedding tables draw from a normal truncated at 2 sigma with
//    `embedding_sigma`.
//  - Biases and norm biases start at 0, norm gains at 1.
// `overrides` replaces `kind` for a whole parameter group.
// Every tensor draws from its own stream keyed by (seed, parameter name), so
// parameters with the same name and shape initialize identically across
// model variants.
struct InitScheme {
  InitKind kind = InitKind::kXavierUniform;
  double sigma = 0.02;
  double embedding_sigma = 0.1;
  std::uint64_t seed = 1;
  std::map<ParamGroup, InitKind> overrides;
};

nlohmann::json to_json(const InitScheme& s);
InitScheme init_scheme_from_json(const nlohmann::json& j);

inline double xavier_uniform_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <class T>
void init_params(ParamStore<T>& store, const InitScheme& scheme);

}  // namespace hhft
