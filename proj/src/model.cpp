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

#include "hhft/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace hhft {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kMlp:
      return "mlp";
    case Variant::kSharedTransformer:
      return "shared-transformer";
    case Variant::kHhft:
      return "hhft";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "mlp") return Variant::kMlp;
  if (s == "shared-transformer") return Variant::kSharedTransformer;
  if (s == "hhft") return Variant::kHhft;
  throw ConfigError("unknown model variant '" + s + "' (expected mlp, shared-transformer or hhft)");
}

void ModelConfig::validate() const {
  schema.validate();
  encoder.validate();
  hiformer.validate();
  if (encoder.d != schema.d)
    throw ConfigError("encoder width " + std::to_string(encoder.d) + " differs from token width " +
                      std::to_string(schema.d));
  for (int w : head_hidden)
    if (w < 1) throw ConfigError("head hidden widths must be >= 1");
}

std::vector<int> ModelConfig::resolved_head_hidden() const {
  if (!head_hidden.empty()) return head_hidden;
  return {4 * schema.d, schema.d};
}

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json schema = to_json(c.schema);
  schema.erase("d");
  return {{"variant", to_string(c.variant)},
          {"schema", schema},
          {"d", c.schema.d},
          {"d_ffn", c.encoder.d_ffn},
          {"n_heads", c.encoder.n_heads},
          {"n1", c.encoder.n1},
          {"norm", c.encoder.norm == NormPlacement::kPre ? "pre" : "post"},
          {"ln_eps", c.encoder.ln_eps},
          {"n2", c.hiformer.n2},
          {"d_h", c.hiformer.d_h},
          {"n_h", c.hiformer.n_h},
          {"head_hidden", c.head_hidden},
          {"pooling", c.pooling == PoolMode::kMean ? "mean" : "last"}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c = desk_base_config(variant_from_string(j.value("variant", std::string("hhft"))));
  try {
    if (j.contains("schema")) {
      nlohmann::json s = j.at("schema");
      if (!s.contains("d")) s["d"] = c.schema.d;
      c.schema = schema_from_json(s);
    }
    c.schema.d = j.value("d", c.schema.d);
    c.encoder.d = c.schema.d;
    c.encoder.d_ffn = j.value("d_ffn", c.encoder.d_ffn);
    c.encoder.n_heads = j.value("n_heads", c.encoder.n_heads);
    c.encoder.n1 = j.value("n1", c.encoder.n1);
    c.encoder.ln_eps = j.value("ln_eps", c.encoder.ln_eps);
    const std::string norm = j.value("norm", std::string("pre"));
    if (norm != "pre" && norm != "post") throw ConfigError("norm must be 'pre' or 'post', got '" + norm + "'");
    c.encoder.norm = norm == "pre" ? NormPlacement::kPre : NormPlacement::kPost;
    c.hiformer.n2 = j.value("n2", c.hiformer.n2);
    c.hiformer.d_h = j.value("d_h", c.hiformer.d_h);
    c.hiformer.n_h = j.value("n_h", c.hiformer.n_h);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    const std::string pool = j.value("pooling", std::string("mean"));
    if (pool != "mean" && pool != "last") throw ConfigError("pooling must be 'mean' or 'last', got '" + pool + "'");
    c.pooling = pool == "mean" ? PoolMode::kMean : PoolMode::kLast;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig desk_base_config(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.schema = default_schema(32);
  c.encoder = {1, 32, 32, 4, NormPlacement::kPre, 1e-5};
  c.hiformer = {1, 8, 4};
  c.head_hidden = {128, 32};
  return c;
}

ParamCount param_count_formula(const ModelConfig& c) {
  ParamCount pc;
  const std::size_t k = c.schema.num_blocks();
  const auto d = static_cast<std::size_t>(c.schema.d);
  const auto f = static_cast<std::size_t>(c.encoder.d_ffn);
  const bool mlp = c.variant == Variant::kMlp;
  for (const BlockSpec& b : c.schema.blocks) {
    const auto e = static_cast<std::size_t>(b.e_k);
    switch (b.kind) {
      case BlockKind::kCategorical:
        for (std::size_t i = 0; i < b.vocab_sizes.size(); ++i)
          pc.embedding += static_cast<std::size_t>(b.vocab_sizes[i]) * static_cast<std::size_t>(b.field_dims[i]);
        break;
      case BlockKind::kSequence:
        pc.embedding += static_cast<std::size_t>(b.vocab_sizes[0]) * e;
        break;
      case BlockKind::kContinuous:
        pc.dense += static_cast<std::size_t>(b.cont_dim) * e + e;
        break;
    }
    if (!mlp) pc.dense += e * d + d;
  }
  const std::size_t groups = c.variant == Variant::kHhft ? k : 1;
  pc.dense += static_cast<std::size_t>(c.effective_n1()) * groups * (4 * d * d + 2 * d * f + f + 5 * d);
  const auto nh = static_cast<std::size_t>(c.hiformer.n_h), dh = static_cast<std::size_t>(c.hiformer.d_h);
  pc.dense += static_cast<std::size_t>(c.effective_n2()) *
              (2 * k * d * nh * dh + 2 * nh * (k * d) * (k * dh) + k * (4 * d) + k * (2 * d * f + f + d));
  std::size_t in = mlp ? c.schema.total_embed_dim() : k * d;
  for (int w : c.resolved_head_hidden()) {
    pc.dense += in * static_cast<std::size_t>(w) + static_cast<std::size_t>(w);
    in = static_cast<std::size_t>(w);
  }
  pc.dense += in + 1;
  return pc;
}

std::uint64_t flops_formula(const ModelConfig& c, std::size_t batch_size) {
  const std::uint64_t k = c.schema.num_blocks();
  const auto d = static_cast<std::uint64_t>(c.schema.d);
  const auto f = static_cast<std::uint64_t>(c.encoder.d_ffn);
  const bool mlp = c.variant == Variant::kMlp;
  std::uint64_t macs = 0;
  for (const BlockSpec& b : c.schema.blocks) {
    const auto e = static_cast<std::uint64_t>(b.e_k);
    if (b.kind == BlockKind::kContinuous) macs += static_cast<std::uint64_t>(b.cont_dim) * e;
    if (!mlp) macs += e * d;
  }
  const auto heads = static_cast<std::uint64_t>(c.encoder.n_heads);
  const std::uint64_t enc_layer = k * 4 * d * d + heads * (k * k * 2 * (d / heads) + k * k) + k * 2 * d * f;
  macs += static_cast<std::uint64_t>(c.effective_n1()) * enc_layer;
  const auto nh = static_cast<std::uint64_t>(c.hiformer.n_h), dh = static_cast<std::uint64_t>(c.hiformer.d_h);
  const std::uint64_t hif_layer =
      k * d * nh * dh + 2 * nh * (k * d) * (k * dh) + nh * (k * k * 2 * dh + k * k) + k * nh * dh * d + k * 2 * d * f;
  macs += static_cast<std::uint64_t>(c.effective_n2()) * hif_layer;
  std::uint64_t in = mlp ? c.schema.total_embed_dim() : k * d;
  for (int w : c.resolved_head_hidden()) {
    macs += in * static_cast<std::uint64_t>(w);
    in = static_cast<std::uint64_t>(w);
  }
  macs += in;
  return macs * batch_size;
}

template <class T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)) {
  config_.encoder.d = config_.schema.d;
  config_.validate();
  const bool mlp = config_.variant == Variant::kMlp;
  tokenizer_ = FeatureTokenizer<T>(config_.schema, store_, !mlp, config_.pooling);
  const std::size_t k = config_.schema.num_blocks();
  const std::size_t groups = config_.variant == Variant::kHhft ? k : 1;
  for (int l = 0; l < config_.effective_n1(); ++l)
    encoder_.push_back(add_encoder_layer(store_, "enc" + std::to_string(l), groups, config_.encoder));
  for (int l = 0; l < config_.effective_n2(); ++l)
    hiformer_.push_back(add_hiformer_layer(store_, "hif" + std::to_string(l), k, config_.encoder, config_.hiformer));
  std::size_t in = mlp ? config_.schema.total_embed_dim() : k * static_cast<std::size_t>(config_.schema.d);
  std::vector<int> widths = config_.resolved_head_hidden();
  widths.push_back(1);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const auto out = static_cast<std::size_t>(widths[i]);
    const std::string n = "head." + std::to_string(i);
    const std::size_t w = store_.add({n + ".w", ParamGroup::kWeight, in, out, false}, {in, out});
    const std::size_t b = store_.add({n + ".b", ParamGroup::kBias, in, out, false}, {out});
    head_.emplace_back(w, b);
    in = out;
  }
}

template <class T>
Var<T> Model<T>::head(Var<T> x, const std::vector<Var<T>>& p) const {
  for (std::size_t i = 0; i < head_.size(); ++i) {
    x = linear(x, p[head_[i].first], p[head_[i].second]);
    if (i + 1 < head_.size()) x = relu(x);
  }
  return x;
}

template <class T>
Var<T> Model<T>::forward(Tape<T>& tape, RecordBatch batch, std::vector<Var<T>>* bound, ForwardTrace<T>* trace) const {
  if (batch.empty()) throw ContractError("forward() on an empty batch");
  std::vector<Var<T>> p = store_.bind(tape);
  const std::size_t n = batch.size();
  Var<T> x;
  if (config_.variant == Variant::kMlp) {
    std::vector<Var<T>> e = tokenizer_.embed(p, batch);
    x = e.size() == 1 ? e[0] : concat(std::span<const Var<T>>(e), 1);
  } else {
    Var<T> h = tokenizer_.tokenize(p, batch);
    if (trace) trace->tokens0 = h;
    std::vector<EncoderLayerVars<T>> enc;
    for (const auto& l : encoder_) enc.push_back(bind_layer(l, p));
    h = encoder_forward(h, enc, config_.encoder, trace ? &trace->encoder_probs : nullptr);
    if (trace) trace->encoded = h;
    std::vector<HiformerLayerVars<T>> hif;
    for (const auto& l : hiformer_) hif.push_back(bind_layer(l, p));
    h = hiformer_forward(h, hif, config_.encoder, config_.hiformer, trace ? &trace->hiformer_probs : nullptr);
    if (trace) trace->final_tokens = h;
    x = reshape(h, Shape{n, h.dim(1) * h.dim(2)});
  }
  Var<T> logits = reshape(head(x, p), Shape{n});
  if (bound) *bound = std::move(p);
  return logits;
}

template <class T>
Tensor<T> Model<T>::logits(RecordBatch batch) const {
  Tape<T> tape(false);
  return forward(tape, batch).value();
}

template <class T>
Tensor<T> sigmoid_of(const Tensor<T>& logits) {
  Tensor<T> out = logits;
  for (T& v : out.data()) v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  return out;
}

template <class T>
Tensor<T> Model<T>::predict_proba(RecordBatch batch) const {
  return sigmoid_of(logits(batch));
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[8] = {'H', 'H', 'F', 'T', 'C', 'K', 'P', 'T'};

template <class U>
void put(std::ostream& os, U v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    std::reverse(b, b + sizeof(U));
    os.write(reinterpret_cast<const char*>(b), sizeof(U));
  } else {
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  template <class U>
  U get(const std::string& field) {
    U v;
    bytes(reinterpret_cast<char*>(&v), sizeof(U), field);
    if constexpr (std::endian::native == std::endian::big) {
      unsigned char* b = reinterpret_cast<unsigned char*>(&v);
      std::reverse(b, b + sizeof(U));
    }
    return v;
  }

  void bytes(char* dst, std::size_t n, const std::string& field) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw LoadError("truncated checkpoint while reading " + field);
  }

  std::string str(std::size_t n, const std::string& field) {
    std::string s(n, '\0');
    bytes(s.data(), n, field);
    return s;
  }

 private:
  std::istream& is_;
};

nlohmann::json read_header(Reader& r) {
  const std::string magic = r.str(sizeof(kMagic), "magic");
  if (magic != std::string(kMagic, sizeof(kMagic))) throw LoadError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw LoadError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  const auto len = r.get<std::uint32_t>("config length");
  const std::string text = r.str(len, "config");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
}

}  // namespace

template <class T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  const std::string cfg = to_json(model.config()).dump();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const ParamStore<T>& store = model.params();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.info(i).name;
    const Tensor<T>& t = store.tensor(i);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(sizeof(T)));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto dim : t.shape()) put<std::uint64_t>(os, dim);
    for (T v : t.data()) put<T>(os, v);
  }
  if (!os) throw ConfigError("failed writing checkpoint " + path.string());
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint " + path.string());
  Reader r(is);
  try {
    return model_config_from_json(read_header(r));
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what());
  } catch (const SchemaError& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what());
  }
}

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint " + path.string());
  Reader r(is);
  ModelConfig config;
  try {
    config = model_config_from_json(read_header(r));
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what());
  } catch (const SchemaError& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what());
  }
  Model<T> model(config);
  ParamStore<T>& store = model.params();
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != store.size())
    throw LoadError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                    std::to_string(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& expected = store.info(i).name;
    const std::string name = r.str(r.get<std::uint32_t>("name length of tensor " + std::to_string(i)), "tensor name");
    if (name != expected) throw LoadError("tensor " + std::to_string(i) + " is '" + name + "', expected '" + expected + "'");
    const auto dtype = r.get<std::uint8_t>(name + " dtype");
    if (dtype != 4 && dtype != 8) throw LoadError("tensor '" + name + "' has unknown dtype " + std::to_string(dtype));
    const auto rank = r.get<std::uint32_t>(name + " rank");
    Shape shape;
    for (std::uint32_t a = 0; a < rank; ++a) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>(name + " shape")));
    Tensor<T>& t = store.tensor(i);
    if (shape != t.shape())
      throw LoadError("shape mismatch for tensor '" + name + "': file has " + shape_str(shape) + ", config implies " +
                      shape_str(t.shape()));
    for (std::size_t j = 0; j < t.size(); ++j)
      t[j] = dtype == 4 ? static_cast<T>(r.get<float>(name)) : static_cast<T>(r.get<double>(name));
  }
  return model;
}

template class Model<float>;
template class Model<double>;
template Tensor<float> sigmoid_of<float>(const Tensor<float>&);
template Tensor<double> sigmoid_of<double>(const Tensor<double>&);
template void save_checkpoint<float>(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace hhft
