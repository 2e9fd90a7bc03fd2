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

#include <gtest/gtest.h>

#include "hhft/grad_check.hpp"
#include "hhft/hiformer.hpp"
#include "hhft/random.hpp"
#include "reference.hpp"

using hhft::EncoderConfig;
using hhft::HiformerConfig;
using hhft::ParamStore;
using hhft::Shape;
using hhft::Tape;
using hhft::Tensor;
using T = Tensor<double>;
using V = hhft::Var<double>;

namespace {

T random_tensor(hhft::Rng& rng, Shape s, double lo = -1, double hi = 1) {
  T t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

void fill_random(ParamStore<double>& store, std::uint64_t seed) {
  hhft::Rng rng(seed);
  for (std::size_t i = 0; i < store.size(); ++i)
    for (double& v : store.tensor(i).data()) v = rng.uniform(-0.8, 0.8);
}

EncoderConfig encoder(int d, int ffn, hhft::NormPlacement norm = hhft::NormPlacement::kPre) {
  EncoderConfig c;
  c.d = d;
  c.d_ffn = ffn;
  c.n_heads = 1;
  c.norm = norm;
  return c;
}

HiformerConfig hiformer(int n2, int d_h, int n_h) {
  HiformerConfig c;
  c.n2 = n2;
  c.d_h = d_h;
  c.n_h = n_h;
  return c;
}

ref::LayerTensors tensors(const ParamStore<double>& s, const hhft::HiformerLayerLayout& l) {
  ref::LayerTensors t;
  t.wq = s.tensor(l.wq), t.wo = s.tensor(l.wo);
  for (auto i : l.wk_hat) t.wk_hat.push_back(s.tensor(i));
  for (auto i : l.wv_hat) t.wv_hat.push_back(s.tensor(i));
  t.ln1_g = s.tensor(l.ln1_g), t.ln1_b = s.tensor(l.ln1_b), t.ln2_g = s.tensor(l.ln2_g), t.ln2_b = s.tensor(l.ln2_b);
  t.w1 = s.tensor(l.w1), t.b1 = s.tensor(l.b1), t.w2 = s.tensor(l.w2), t.b2 = s.tensor(l.b2);
  return t;
}

// Ŵ with K identical d x d_h blocks on the diagonal.
T block_diagonal(const T& w, std::size_t k) {
  const std::size_t d = w.shape()[0], dh = w.shape()[1];
  T out({k * d, k * dh});
  for (std::size_t b = 0; b < k; ++b)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < dh; ++j) out[(b * d + i) * (k * dh) + b * dh + j] = w[i * dh + j];
  return out;
}

void expect_near(const T& a, const T& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(CompositeProject, BlockDiagonalReducesToPerTokenProjection) {
  hhft::Rng rng(1);
  const T w = random_tensor(rng, {3, 2});
  const T hv = random_tensor(rng, {2, 4, 3});
  Tape<double> tape;
  const T got = hhft::composite_project(tape.constant(hv), tape.constant(block_diagonal(w, 4))).value();
  ASSERT_EQ(got.shape(), Shape({2, 4, 2}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 4; ++k) {
      auto want = ref::vec_mat(ref::record(hv, b)[k], ref::plain_matrix(w));
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(got[(b * 4 + k) * 2 + j], want[j], 1e-15);
    }
}

TEST(CompositeProject, ZeroMatrixGivesZeroKeys) {
  hhft::Rng rng(2);
  Tape<double> tape;
  EXPECT_EQ(hhft::composite_project(tape.constant(random_tensor(rng, {2, 3, 2})), tape.constant(T({6, 3}))).value(),
            T({2, 3, 1}));
}

TEST(CompositeProject, DenseHandExample) {
  Tape<double> tape;
  // K=2, d=2, d_h=1: flatten [1,2,3,4] · Ŵ(4x2)
  const T w({4, 2}, {1, 0, 0, 1, 2, -1, 0, 3});
  const T got = hhft::composite_project(tape.constant(T({1, 2, 2}, {1, 2, 3, 4})), tape.constant(w)).value();
  EXPECT_EQ(got, T({1, 2, 1}, {1 + 6, 2 - 3 + 12}));
}

TEST(CompositeProject, ShapeMismatchIsConfigError) {
  Tape<double> tape;
  EXPECT_THROW(hhft::composite_project(tape.constant(T({1, 2, 2})), tape.constant(T({3, 2}))), hhft::ConfigError);
  EXPECT_THROW(hhft::composite_project(tape.constant(T({1, 2, 2})), tape.constant(T({4, 3}))), hhft::ConfigError);
}

TEST(CompositeProject, DenseMatrixMixesTokensBlockDiagonalDoesNot) {
  hhft::Rng rng(3);
  const T dense = random_tensor(rng, {3 * 2, 3 * 2});
  const T diag = block_diagonal(random_tensor(rng, {2, 2}), 3);
  // d K̂_0 / d H_2 via the gradient of sum(K̂_0)
  auto grad_wrt_other = [&](const T& w) {
    Tape<double> tape;
    auto h = tape.leaf(random_tensor(rng, {1, 3, 2}));
    auto keys = hhft::composite_project(h, tape.constant(w));
    tape.backward(hhft::sum(hhft::slice(keys, 1, 0, 1)));
    const T& g = tape.grad(h);
    return std::abs(g[4]) + std::abs(g[5]);
  };
  EXPECT_GT(grad_wrt_other(dense), 0.0);
  EXPECT_EQ(grad_wrt_other(diag), 0.0);
}

TEST(HiformerAttention, ZeroProjectionsAreResidualIdentity) {
  hhft::Rng rng(4);
  ParamStore<double> store;
  auto enc = encoder(4, 3);
  auto hc = hiformer(1, 2, 2);
  auto l = hhft::add_hiformer_layer(store, "hif0", 3, enc, hc);
  fill_random(store, 5);
  for (auto i : {l.wq, l.wo, l.w1, l.b1, l.w2, l.b2}) store.tensor(i).fill(0);
  for (auto i : l.wk_hat) store.tensor(i).fill(0);
  for (auto i : l.wv_hat) store.tensor(i).fill(0);
  Tape<double> tape;
  auto h = tape.constant(random_tensor(rng, {2, 3, 4}));
  T probs;
  EXPECT_EQ(hhft::hiformer_attention(h, hhft::bind_layer(l, store.bind(tape)), enc, hc, &probs).value(), h.value());
  for (double p : probs.data()) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

class HiformerOracle : public ::testing::TestWithParam<hhft::NormPlacement> {};

TEST_P(HiformerOracle, MatchesLoopReference) {
  hhft::Rng rng(6);
  for (auto [kk, d, dh, nh] : {std::tuple{2, 2, 1, 1}, std::tuple{3, 4, 2, 2}, std::tuple{4, 8, 4, 3}}) {
    ParamStore<double> store;
    auto enc = encoder(d, 5, GetParam());
    auto hc = hiformer(1, dh, nh);
    auto l = hhft::add_hiformer_layer(store, "hif0", static_cast<std::size_t>(kk), enc, hc);
    fill_random(store, static_cast<std::uint64_t>(kk));
    const T hv = random_tensor(rng, {2, static_cast<std::size_t>(kk), static_cast<std::size_t>(d)});
    Tape<double> tape;
    const T got = hhft::hiformer_attention(tape.constant(hv), hhft::bind_layer(l, store.bind(tape)), enc, hc).value();
    auto p = tensors(store, l);
    for (std::size_t b = 0; b < 2; ++b) {
      auto want = ref::hiformer_layer(ref::record(hv, b), p, GetParam() == hhft::NormPlacement::kPre, 1e-5);
      const auto g = ref::record(got, b);
      for (std::size_t t = 0; t < want.size(); ++t)
        for (std::size_t j = 0; j < want[t].size(); ++j) EXPECT_NEAR(g[t][j], want[t][j], 1e-12);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Norms, HiformerOracle,
                         ::testing::Values(hhft::NormPlacement::kPre, hhft::NormPlacement::kPost));

class HiformerReduction : public ::testing::TestWithParam<hhft::NormPlacement> {};

// Block-diagonal composite projections and tied per-token weights reproduce
// the shared-parameter encoder layer.
TEST_P(HiformerReduction, EqualsSharedEncoderLayer) {
  hhft::Rng rng(7);
  const std::size_t kk = 4, d = 8, heads = 2, dh = d / heads;
  EncoderConfig enc = encoder(static_cast<int>(d), 6, GetParam());
  enc.n_heads = static_cast<int>(heads);
  auto hc = hiformer(1, static_cast<int>(dh), static_cast<int>(heads));

  ParamStore<double> shared;
  auto ls = hhft::add_encoder_layer(shared, "enc0", 1, enc);
  fill_random(shared, 8);
  ParamStore<double> hif;
  auto lh = hhft::add_hiformer_layer(hif, "hif0", kk, enc, hc);

  auto tile = [&](std::size_t src, std::size_t dst) {
    const T& s = shared.tensor(src);
    T& t = hif.tensor(dst);
    for (std::size_t e = 0; e < t.size(); ++e) t[e] = s[e % s.size()];
  };
  tile(ls.wq, lh.wq);
  tile(ls.wo, lh.wo);
  tile(ls.ln1_g, lh.ln1_g);
  tile(ls.ln1_b, lh.ln1_b);
  tile(ls.ln2_g, lh.ln2_g);
  tile(ls.ln2_b, lh.ln2_b);
  tile(ls.w1, lh.w1);
  tile(ls.b1, lh.b1);
  tile(ls.w2, lh.w2);
  tile(ls.b2, lh.b2);
  for (std::size_t h = 0; h < heads; ++h)
    for (auto [src, dst] : {std::pair{ls.wk, lh.wk_hat[h]}, std::pair{ls.wv, lh.wv_hat[h]}}) {
      const T& w = shared.tensor(src);
      T head({d, dh});
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < dh; ++j) head[i * dh + j] = w[i * d + h * dh + j];
      hif.tensor(dst) = block_diagonal(head, kk);
    }

  const T hv = random_tensor(rng, {3, kk, d});
  Tape<double> tape;
  const T a = hhft::encoder_layer(tape.constant(hv), hhft::bind_layer(ls, shared.bind(tape)), enc).value();
  const T b = hhft::hiformer_attention(tape.constant(hv), hhft::bind_layer(lh, hif.bind(tape)), enc, hc).value();
  expect_near(a, b, 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Norms, HiformerReduction,
                         ::testing::Values(hhft::NormPlacement::kPre, hhft::NormPlacement::kPost));

TEST(HiformerForward, StackingSemantics) {
  hhft::Rng rng(9);
  ParamStore<double> store;
  auto enc = encoder(4, 4);
  auto hc = hiformer(2, 2, 2);
  auto l0 = hhft::add_hiformer_layer(store, "hif0", 3, enc, hc);
  auto l1 = hhft::add_hiformer_layer(store, "hif1", 3, enc, hc);
  fill_random(store, 10);
  Tape<double> tape;
  auto params = store.bind(tape);
  auto h = tape.constant(random_tensor(rng, {2, 3, 4}));
  const auto v0 = hhft::bind_layer(l0, params), v1 = hhft::bind_layer(l1, params);
  EXPECT_EQ(hhft::hiformer_forward(h, {}, enc, hc).value(), h.value());
  EXPECT_EQ(hhft::hiformer_forward(h, {v0}, enc, hc).value(), hhft::hiformer_attention(h, v0, enc, hc).value());
  const T twice = hhft::hiformer_forward(h, {v0, v1}, enc, hc).value();
  auto p0 = tensors(store, l0), p1 = tensors(store, l1);
  for (std::size_t b = 0; b < 2; ++b) {
    auto want = ref::hiformer_layer(ref::hiformer_layer(ref::record(h.value(), b), p0, true, 1e-5), p1, true, 1e-5);
    const auto g = ref::record(twice, b);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g[t][j], want[t][j], 1e-12);
  }
}

TEST(HiformerAttention, RowsAreDistributionsAndShapeIsPreserved) {
  hhft::Rng rng(11);
  ParamStore<double> store;
  auto enc = encoder(6, 4);
  auto hc = hiformer(1, 5, 3);
  auto l = hhft::add_hiformer_layer(store, "hif0", 4, enc, hc);
  fill_random(store, 12);
  Tape<double> tape;
  auto h = tape.constant(random_tensor(rng, {5, 4, 6}, -3, 3));
  T probs;
  auto out = hhft::hiformer_attention(h, hhft::bind_layer(l, store.bind(tape)), enc, hc, &probs);
  EXPECT_EQ(out.shape(), h.shape());
  for (std::size_t r = 0; r < probs.size() / 4; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j) s += probs[r * 4 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(HiformerAttention, ComposesWithEncoderLayers) {
  hhft::Rng rng(13);
  ParamStore<double> store;
  EncoderConfig enc = encoder(4, 4);
  enc.n_heads = 2;
  auto hc = hiformer(1, 3, 2);
  auto le = hhft::add_encoder_layer(store, "enc0", 3, enc);
  auto lh = hhft::add_hiformer_layer(store, "hif0", 3, enc, hc);
  fill_random(store, 14);
  Tape<double> tape;
  auto params = store.bind(tape);
  auto h = tape.constant(random_tensor(rng, {2, 3, 4}));
  auto a = hhft::hiformer_attention(hhft::encoder_layer(h, hhft::bind_layer(le, params), enc),
                                    hhft::bind_layer(lh, params), enc, hc);
  auto b = hhft::encoder_layer(hhft::hiformer_attention(h, hhft::bind_layer(lh, params), enc, hc),
                               hhft::bind_layer(le, params), enc);
  EXPECT_EQ(a.shape(), h.shape());
  EXPECT_EQ(b.shape(), h.shape());
}

class HiformerGradients : public ::testing::TestWithParam<hhft::NormPlacement> {};

TEST_P(HiformerGradients, FullLayerMatchesFiniteDifferences) {
  hhft::Rng rng(15);
  ParamStore<double> store;
  auto enc = encoder(4, 5, GetParam());
  auto hc = hiformer(1, 3, 2);
  auto l = hhft::add_hiformer_layer(store, "hif0", 3, enc, hc);
  fill_random(store, 16);
  std::vector<T> params = {random_tensor(rng, {2, 3, 4})};
  for (std::size_t i = 0; i < store.size(); ++i) params.push_back(store.tensor(i));
  const T weights = random_tensor(rng, {2, 3, 4});
  const auto r = hhft::grad_check(
      [&](Tape<double>& tape, std::span<const V> p) {
        std::vector<V> v(p.begin() + 1, p.end());
        return hhft::sum(
            hhft::mul(hhft::hiformer_attention(p[0], hhft::bind_layer(l, v), enc, hc), tape.constant(weights)));
      },
      params);
  EXPECT_TRUE(r.pass) << "param " << r.param << " index " << r.index << " err " << r.max_rel_err;
}

INSTANTIATE_TEST_SUITE_P(Norms, HiformerGradients,
                         ::testing::Values(hhft::NormPlacement::kPre, hhft::NormPlacement::kPost));

TEST(HiformerConfig, Validation) {
  EXPECT_THROW(hiformer(1, 0, 1).validate(), hhft::ConfigError);
  EXPECT_THROW(hiformer(1, 2, 0).validate(), hhft::ConfigError);
  EXPECT_THROW(hiformer(-1, 2, 2).validate(), hhft::ConfigError);
  EXPECT_NO_THROW(hiformer(0, 2, 2).validate());
}
