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

#include <vector>

#include "hhft/error.hpp"
#include "hhft/kernels.hpp"
#include "hhft/random.hpp"

namespace k = hhft::kernels;

namespace {

template <class T>
std::vector<T> random_vec(hhft::Rng& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return v;
}

// Plain triple loop in long double.
template <class T>
std::vector<long double> naive_gemm(std::size_t m, std::size_t n, std::size_t kk, const std::vector<T>& a,
                                    const std::vector<T>& b, const std::vector<T>& c0) {
  std::vector<long double> c(c0.begin(), c0.end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p) c[i * n + j] += static_cast<long double>(a[i * kk + p]) * b[p * n + j];
  return c;
}

bool have_avx2() { return k::detected_isa() == k::Isa::kAvx2; }

}  // namespace

template <class T>
class KernelTest : public ::testing::Test {};
using Types = ::testing::Types<float, double>;
TYPED_TEST_SUITE(KernelTest, Types);

TYPED_TEST(KernelTest, ScalarGemmMatchesNaive) {
  using T = TypeParam;
  hhft::Rng rng(7);
  const double tol = sizeof(T) == 4 ? 1e-4 : 1e-12;
  for (auto [m, n, kk] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1}, {3, 5, 7}, {17, 9, 33}, {2, 40, 1}}) {
    auto a = random_vec<T>(rng, m * kk), b = random_vec<T>(rng, kk * n), c = random_vec<T>(rng, m * n);
    const auto want = naive_gemm(m, n, kk, a, b, c);
    k::scalar_table<T>().gemm_nn(m, n, kk, a.data(), b.data(), c.data());
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(static_cast<double>(c[i]), static_cast<double>(want[i]), tol);
  }
}

TYPED_TEST(KernelTest, Avx2MatchesScalarOverRandomShapes) {
  using T = TypeParam;
  if (!have_avx2()) GTEST_SKIP() << "host has no AVX2";
  hhft::Rng rng(11);
  const double tol = sizeof(T) == 4 ? 2e-5 : 1e-13;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.below(19), n = 1 + rng.below(37), kk = 1 + rng.below(41);
    auto a = random_vec<T>(rng, m * kk), b = random_vec<T>(rng, kk * n), c = random_vec<T>(rng, m * n);
    auto c2 = c;
    k::scalar_table<T>().gemm_nn(m, n, kk, a.data(), b.data(), c.data());
    k::avx2_table<T>().gemm_nn(m, n, kk, a.data(), b.data(), c2.data());
    for (std::size_t i = 0; i < c.size(); ++i)
      ASSERT_NEAR(static_cast<double>(c[i]), static_cast<double>(c2[i]), tol * static_cast<double>(kk))
          << m << "x" << n << "x" << kk;

    auto x = random_vec<T>(rng, kk), y = random_vec<T>(rng, kk);
    auto y2 = y;
    const T alpha = static_cast<T>(rng.uniform(-2, 2));
    k::scalar_table<T>().axpy(kk, alpha, x.data(), y.data());
    k::avx2_table<T>().axpy(kk, alpha, x.data(), y2.data());
    for (std::size_t i = 0; i < kk; ++i) ASSERT_NEAR(static_cast<double>(y[i]), static_cast<double>(y2[i]), tol);
    ASSERT_NEAR(static_cast<double>(k::scalar_table<T>().dot(kk, x.data(), y.data())),
                static_cast<double>(k::avx2_table<T>().dot(kk, x.data(), y.data())), tol * static_cast<double>(kk));
  }
}

TYPED_TEST(KernelTest, TransposedVariantsAgreeWithExplicitTranspose) {
  using T = TypeParam;
  hhft::Rng rng(3);
  const std::size_t m = 5, n = 6, kk = 7;
  auto a = random_vec<T>(rng, m * kk), b = random_vec<T>(rng, kk * n);
  std::vector<T> bt(n * kk), at(kk * m);
  k::transpose(kk, n, b.data(), bt.data());
  k::transpose(m, kk, a.data(), at.data());
  std::vector<T> ref(m * n, T(0)), nt(m * n, T(0)), tn(m * n, T(0));
  k::gemm_nn(m, n, kk, a.data(), b.data(), ref.data());
  k::gemm_nt(m, n, kk, a.data(), bt.data(), nt.data());
  k::gemm_tn(m, n, kk, at.data(), b.data(), tn.data());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_EQ(ref[i], nt[i]);
    EXPECT_EQ(ref[i], tn[i]);
  }
}

TEST(KernelDispatch, IsaCanBeForced) {
  const k::Isa before = k::active_isa();
  k::set_active_isa(k::Isa::kScalar);
  EXPECT_EQ(k::active_isa(), k::Isa::kScalar);
  if (have_avx2()) {
    k::set_active_isa(k::Isa::kAvx2);
    EXPECT_EQ(k::active_isa(), k::Isa::kAvx2);
  } else {
    EXPECT_THROW(k::set_active_isa(k::Isa::kAvx2), hhft::ContractError);
  }
  k::set_active_isa(before);
  EXPECT_EQ(k::isa_name(k::Isa::kScalar), "scalar");
}
