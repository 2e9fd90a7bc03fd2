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
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhft/encoder.hpp"
#include "hhft/hiformer.hpp"
#include "hhft/tokenizer.hpp"

namespace hhft {

enum class Variant { kMlp, kSharedTransformer, kHhft };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::kHhft;
  FeatureSchema schema;  // schema.d is the token width
  EncoderConfig encoder;
  HiformerConfig hiformer;
  // Hidden widths of the prediction MLP (and of the MLP baseline). Empty
  // means the default [4d, d].
  std::vector<int> head_hidden;
  PoolMode pooling = PoolMode::kMean;

  // Encoder d is kept in sync with schema.d.
  void validate() const;
  std::vector<int> resolved_head_hidden() const;
  // n2 actually used: the MLP and shared-transformer variants have none.
  int effective_n2() const { return variant == Variant::kHhft ? hiformer.n2 : 0; }
  int effective_n1() const { return variant == Variant::kMlp ? 0 : encoder.n1; }
};

nlohmann::json to_json(const ModelConfig& c);
// Missing fields take desk-scale defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Desk-scale base: K=4, d=32, d_ffn=32, n1=1, n2=1, d_h=8, n_h=4, head [128, 32].
ModelConfig desk_base_config(Variant variant = Variant::kHhft);

struct ParamCount {
  std::size_t dense = 0;
  std::size_t embedding = 0;
  bool operator==(const ParamCount&) const = default;
};

// Closed-form parameter count, derived from the configuration alone.
ParamCount param_count_formula(const ModelConfig& c);

// Analytic multiply-accumulate count of one forward pass:
//   matmul [m x k][k x n]            m*k*n
//   attention, per head and record   M*N*(d_q + d_v) + M*N (softmax)
// Layer norms, activations and additions are not counted.
std::uint64_t flops_formula(const ModelConfig& c, std::size_t batch_size = 1);

template <class T>
struct ForwardTrace {
  Var<T> tokens0;                        // H0 (empty for the MLP variant)
  Var<T> encoded;                        // after the encoder stack
  Var<T> final_tokens;                   // after the hiformer stack
  std::vector<Tensor<T>> encoder_probs;  // [B x H x K x K] per layer
  std::vector<Tensor<T>> hiformer_probs;
};

// HHFT and its two ablation baselines behind one contract.
//   kHhft:              tokenizer -> n1 heterogeneous layers -> n2 hiformer layers -> head
//   kSharedTransformer: tokenizer -> n1 shared-parameter layers -> head
//   kMlp:               concat of block embeddings -> MLP
template <class T>
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const FeatureTokenizer<T>& tokenizer() const { return tokenizer_; }
  const std::vector<EncoderLayerLayout>& encoder_layers() const { return encoder_; }
  const std::vector<HiformerLayerLayout>& hiformer_layers() const { return hiformer_; }
  // (weight, bias) index pairs of the head MLP, input to output.
  const std::vector<std::pair<std::size_t, std::size_t>>& head_layers() const { return head_; }

  // Logits [B] built on `tape` with all parameters bound as leaves. `bound`
  // receives the parameter variables (in store order) for gradient lookup.
  Var<T> forward(Tape<T>& tape, RecordBatch batch, std::vector<Var<T>>* bound = nullptr,
                 ForwardTrace<T>* trace = nullptr) const;
  // Inference-only logits.
  Tensor<T> logits(RecordBatch batch) const;
  Tensor<T> predict_proba(RecordBatch batch) const;

  ParamCount param_count() const { return {store_.count(false), store_.count(true)}; }
  std::uint64_t flops_estimate(std::size_t batch_size = 1) const { return flops_formula(config_, batch_size); }

 private:
  Var<T> head(Var<T> x, const std::vector<Var<T>>& p) const;

  ModelConfig config_;
  ParamStore<T> store_;
  FeatureTokenizer<T> tokenizer_;
  std::vector<EncoderLayerLayout> encoder_;
  std::vector<HiformerLayerLayout> hiformer_;
  std::vector<std::pair<std::size_t, std::size_t>> head_;
};

// Sigmoid of a logit tensor.
template <class T>
Tensor<T> sigmoid_of(const Tensor<T>& logits);

// Binary checkpoint:
//   "HHFTCKPT" | u32 version | u32 json length | config JSON
//   u32 tensor count, then per tensor:
//   u32 name length | name | u8 dtype (4=f32, 8=f64) | u32 rank | u64 dims... | little-endian data
template <class T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path);

// Config echo stored in a checkpoint, without building the model.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace hhft
