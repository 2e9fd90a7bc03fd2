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

#include "hhft/autodiff.hpp"

namespace hhft {

enum class ParamGroup { kEmbedding, kWeight, kBias, kNormGain, kNormBias };

std::string to_string(ParamGroup g);

struct ParamInfo {
  std::string name;
  ParamGroup group = ParamGroup::kWeight;
  // Fan sizes of one independent slice (per block for [G x in x out]).
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  // Last projection of a residual branch (zeroed by zeros-residual-out).
  bool residual_out = false;
};

// Ordered, named parameter tensors. Declaration order is the checkpoint
// order and the optimizer order.
template <class T>
class ParamStore {
 public:
  std::size_t add(ParamInfo info, Shape shape) {
    for (const auto& i : infos_)
      if (i.name == info.name) throw ContractError("duplicate parameter name '" + info.name + "'");
    infos_.push_back(std::move(info));
    tensors_.emplace_back(std::move(shape));
    return tensors_.size() - 1;
  }

  std::size_t size() const { return tensors_.size(); }
  Tensor<T>& tensor(std::size_t i) { return tensors_.at(i); }
  const Tensor<T>& tensor(std::size_t i) const { return tensors_.at(i); }
  const ParamInfo& info(std::size_t i) const { return infos_.at(i); }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < infos_.size(); ++i)
      if (infos_[i].name == name) return i;
    throw ContractError("no parameter named '" + name + "'");
  }

  // Number of scalars in embedding tables (embedding=true) or in all other
  // ("dense") parameters.
  std::size_t count(bool embedding) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if ((infos_[i].group == ParamGroup::kEmbedding) == embedding) n += tensors_[i].size();
    return n;
  }

  // Registers every parameter on `tape` as a borrowed leaf.
  std::vector<Var<T>> bind(Tape<T>& tape) const {
    std::vector<Var<T>> vars;
    vars.reserve(tensors_.size());
    for (const auto& t : tensors_) vars.push_back(tape.parameter(t));
    return vars;
  }

 private:
  std::vector<ParamInfo> infos_;
  std::vector<Tensor<T>> tensors_;
};


}  // namespace hhft
