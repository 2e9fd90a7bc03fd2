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

#include "hhft/init.hpp"

#include <cmath>

#include "hhft/random.hpp"

namespace hhft {

std::string to_string(InitKind k) {
  switch (k) {
    case InitKind::kXavierUniform:
      return "xavier-uniform";
    case InitKind::kXavierNormal:
      return "xavier-normal";
    case InitKind::kTruncatedNormal:
      return "truncated-normal";
    case InitKind::kZerosResidualOut:
      return "zeros-residual-out";
  }
  return "?";
}

InitKind init_kind_from_string(const std::string& s) {
  if (s == "xavier-uniform") return InitKind::kXavierUniform;
  if (s == "xavier-normal") return InitKind::kXavierNormal;
  if (s == "truncated-normal") return InitKind::kTruncatedNormal;
  if (s == "zeros-residual-out") return InitKind::kZerosResidualOut;
  throw ConfigError("unknown init scheme '" + s +
                    "' (expected xavier-uniform, xavier-normal, truncated-normal or zeros-residual-out)");
}

namespace {

ParamGroup group_from_string(const std::string& s) {
  for (ParamGroup g : {ParamGroup::kEmbedding, ParamGroup::kWeight, ParamGroup::kBias, ParamGroup::kNormGain,
                       ParamGroup::kNormBias})
    if (to_string(g) == s) return g;
  throw ConfigError("unknown parameter group '" + s + "'");
}

double truncated_normal(Rng& rng, double sigma) {
  double x;
  do x = rng.normal();
  while (std::abs(x) > 2.0);
  return x * sigma;
}

}  // namespace

nlohmann::json to_json(const InitScheme& s) {
  nlohmann::json o = nlohmann::json::object();
  for (const auto& [g, k] : s.overrides) o[to_string(g)] = to_string(k);
  return {{"scheme", to_string(s.kind)},
          {"sigma", s.sigma},
          {"embedding_sigma", s.embedding_sigma},
          {"seed", s.seed},
          {"overrides", o}};
}

InitScheme init_scheme_from_json(const nlohmann::json& j) {
  InitScheme s;
  try {
    s.kind = init_kind_from_string(j.value("scheme", to_string(s.kind)));
    s.sigma = j.value("sigma", s.sigma);
    s.embedding_sigma = j.value("embedding_sigma", s.embedding_sigma);
    s.seed = j.value("seed", s.seed);
    if (j.contains("overrides"))
      for (const auto& [g, k] : j.at("overrides").items())
        s.overrides[group_from_string(g)] = init_kind_from_string(k.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed init config: ") + e.what());
  }
  if (!(s.sigma > 0) || !(s.embedding_sigma > 0)) throw ConfigError("init sigmas must be > 0");
  return s;
}

template <class T>
void init_params(ParamStore<T>& store, const InitScheme& scheme) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ParamInfo& info = store.info(i);
    Tensor<T>& t = store.tensor(i);
    Rng rng(scheme.seed, fnv1a64(info.name));
    InitKind kind = scheme.kind;
    if (auto it = scheme.overrides.find(info.group); it != scheme.overrides.end()) kind = it->second;
    switch (info.group) {
      case ParamGroup::kEmbedding:
        if (scheme.overrides.count(ParamGroup::kEmbedding) == 0) {
          for (T& v : t.data()) v = static_cast<T>(truncated_normal(rng, scheme.embedding_sigma));
          continue;
        }
        break;
      case ParamGroup::kBias:
      case ParamGroup::kNormBias:
        if (scheme.overrides.count(info.group) == 0) {
          t.fill(T(0));
          continue;
        }
        break;
      case ParamGroup::kNormGain:
        if (scheme.overrides.count(info.group) == 0) {
          t.fill(T(1));
          continue;
        }
        break;
      case ParamGroup::kWeight:
        break;
    }
    if (kind == InitKind::kZerosResidualOut && info.residual_out) {
      t.fill(T(0));
      continue;
    }
    const double fan_sum = static_cast<double>(info.fan_in + info.fan_out);
    switch (kind) {
      case InitKind::kXavierUniform:
      case InitKind::kZerosResidualOut: {
        const double bound = std::sqrt(6.0 / fan_sum);
        for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case InitKind::kXavierNormal: {
        const double sd = std::sqrt(2.0 / fan_sum);
        for (T& v : t.data()) v = static_cast<T>(rng.normal() * sd);
        break;
      }
      case InitKind::kTruncatedNormal:
        for (T& v : t.data()) v = static_cast<T>(truncated_normal(rng, scheme.sigma));
        break;
    }
  }
}

template void init_params<float>(ParamStore<float>&, const InitScheme&);
template void init_params<double>(ParamStore<double>&, const InitScheme&);

}  // namespace hhft
