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

#include "hhft/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define HHFT_HAVE_X86 1
#else
#define HHFT_HAVE_X86 0
#endif

namespace hhft::kernels {

#if HHFT_HAVE_X86
namespace {

#define HHFT_AVX2 __attribute__((target("avx2,fma")))

// Two rows of C at a time, 4 vectors of columns per inner step; the k loop
// runs in order so every C element sees the same accumulation sequence.
HHFT_AVX2 void gemm_nn_f64(std::size_t m, std::size_t n, std::size_t k, const double* a,
                           const double* b, double* c) {
  constexpr std::size_t kW = 4;
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    std::size_t j = 0;
    for (; j + 4 * kW <= n; j += 4 * kW) {
      __m256d x0 = _mm256_loadu_pd(c0 + j), x1 = _mm256_loadu_pd(c0 + j + kW);
      __m256d x2 = _mm256_loadu_pd(c0 + j + 2 * kW), x3 = _mm256_loadu_pd(c0 + j + 3 * kW);
      __m256d y0 = _mm256_loadu_pd(c1 + j), y1 = _mm256_loadu_pd(c1 + j + kW);
      __m256d y2 = _mm256_loadu_pd(c1 + j + 2 * kW), y3 = _mm256_loadu_pd(c1 + j + 3 * kW);
      for (std::size_t p = 0; p < k; ++p) {
        const double* br = b + p * n + j;
        const __m256d b0 = _mm256_loadu_pd(br), b1 = _mm256_loadu_pd(br + kW);
        const __m256d b2 = _mm256_loadu_pd(br + 2 * kW), b3 = _mm256_loadu_pd(br + 3 * kW);
        const __m256d s0 = _mm256_broadcast_sd(a0 + p);
        const __m256d s1 = _mm256_broadcast_sd(a1 + p);
        x0 = _mm256_fmadd_pd(s0, b0, x0);
        x1 = _mm256_fmadd_pd(s0, b1, x1);
        x2 = _mm256_fmadd_pd(s0, b2, x2);
        x3 = _mm256_fmadd_pd(s0, b3, x3);
        y0 = _mm256_fmadd_pd(s1, b0, y0);
        y1 = _mm256_fmadd_pd(s1, b1, y1);
        y2 = _mm256_fmadd_pd(s1, b2, y2);
        y3 = _mm256_fmadd_pd(s1, b3, y3);
      }
      _mm256_storeu_pd(c0 + j, x0);
      _mm256_storeu_pd(c0 + j + kW, x1);
      _mm256_storeu_pd(c0 + j + 2 * kW, x2);
      _mm256_storeu_pd(c0 + j + 3 * kW, x3);
      _mm256_storeu_pd(c1 + j, y0);
      _mm256_storeu_pd(c1 + j + kW, y1);
      _mm256_storeu_pd(c1 + j + 2 * kW, y2);
      _mm256_storeu_pd(c1 + j + 3 * kW, y3);
    }
    for (; j + kW <= n; j += kW) {
      __m256d x0 = _mm256_loadu_pd(c0 + j), y0 = _mm256_loadu_pd(c1 + j);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
        x0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a0 + p), b0, x0);
        y0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a1 + p), b0, y0);
      }
      _mm256_storeu_pd(c0 + j, x0);
      _mm256_storeu_pd(c1 + j, y0);
    }
    for (; j < n; ++j) {
      double s0 = c0[j], s1 = c1[j];
      for (std::size_t p = 0; p < k; ++p) {
        s0 = __builtin_fma(a0[p], b[p * n + j], s0);
        s1 = __builtin_fma(a1[p], b[p * n + j], s1);
      }
      c0[j] = s0;
      c1[j] = s1;
    }
  }
  for (; i < m; ++i) {
    const double* a0 = a + i * k;
    double* c0 = c + i * n;
    std::size_t j = 0;
    for (; j + kW <= n; j += kW) {
      __m256d x0 = _mm256_loadu_pd(c0 + j);
      for (std::size_t p = 0; p < k; ++p)
        x0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a0 + p), _mm256_loadu_pd(b + p * n + j), x0);
      _mm256_storeu_pd(c0 + j, x0);
    }
    for (; j < n; ++j) {
      double s0 = c0[j];
      for (std::size_t p = 0; p < k; ++p) s0 = __builtin_fma(a0[p], b[p * n + j], s0);
      c0[j] = s0;
    }
  }
}

HHFT_AVX2 void gemm_nn_f32(std::size_t m, std::size_t n, std::size_t k, const float* a,
                           const float* b, float* c) {
  constexpr std::size_t kW = 8;
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const float* a0 = a + i * k;
    const float* a1 = a0 + k;
    float* c0 = c + i * n;
    float* c1 = c0 + n;
    std::size_t j = 0;
    for (; j + 4 * kW <= n; j += 4 * kW) {
      __m256 x0 = _mm256_loadu_ps(c0 + j), x1 = _mm256_loadu_ps(c0 + j + kW);
      __m256 x2 = _mm256_loadu_ps(c0 + j + 2 * kW), x3 = _mm256_loadu_ps(c0 + j + 3 * kW);
      __m256 y0 = _mm256_loadu_ps(c1 + j), y1 = _mm256_loadu_ps(c1 + j + kW);
      __m256 y2 = _mm256_loadu_ps(c1 + j + 2 * kW), y3 = _mm256_loadu_ps(c1 + j + 3 * kW);
      for (std::size_t p = 0; p < k; ++p) {
        const float* br = b + p * n + j;
        const __m256 b0 = _mm256_loadu_ps(br), b1 = _mm256_loadu_ps(br + kW);
        const __m256 b2 = _mm256_loadu_ps(br + 2 * kW), b3 = _mm256_loadu_ps(br + 3 * kW);
        const __m256 s0 = _mm256_broadcast_ss(a0 + p);
        const __m256 s1 = _mm256_broadcast_ss(a1 + p);
        x0 = _mm256_fmadd_ps(s0, b0, x0);
        x1 = _mm256_fmadd_ps(s0, b1, x1);
        x2 = _mm256_fmadd_ps(s0, b2, x2);
        x3 = _mm256_fmadd_ps(s0, b3, x3);
        y0 = _mm256_fmadd_ps(s1, b0, y0);
        y1 = _mm256_fmadd_ps(s1, b1, y1);
        y2 = _mm256_fmadd_ps(s1, b2, y2);
        y3 = _mm256_fmadd_ps(s1, b3, y3);
      }
      _mm256_storeu_ps(c0 + j, x0);
      _mm256_storeu_ps(c0 + j + kW, x1);
      _mm256_storeu_ps(c0 + j + 2 * kW, x2);
      _mm256_storeu_ps(c0 + j + 3 * kW, x3);
      _mm256_storeu_ps(c1 + j, y0);
      _mm256_storeu_ps(c1 + j + kW, y1);
      _mm256_storeu_ps(c1 + j + 2 * kW, y2);
      _mm256_storeu_ps(c1 + j + 3 * kW, y3);
    }
    for (; j + kW <= n; j += kW) {
      __m256 x0 = _mm256_loadu_ps(c0 + j), y0 = _mm256_loadu_ps(c1 + j);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(b + p * n + j);
        x0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a0 + p), b0, x0);
        y0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a1 + p), b0, y0);
      }
      _mm256_storeu_ps(c0 + j, x0);
      _mm256_storeu_ps(c1 + j, y0);
    }
    for (; j < n; ++j) {
      float s0 = c0[j], s1 = c1[j];
      for (std::size_t p = 0; p < k; ++p) {
        s0 = __builtin_fmaf(a0[p], b[p * n + j], s0);
        s1 = __builtin_fmaf(a1[p], b[p * n + j], s1);
      }
      c0[j] = s0;
      c1[j] = s1;
    }
  }
  for (; i < m; ++i) {
    const float* a0 = a + i * k;
    float* c0 = c + i * n;
    std::size_t j = 0;
    for (; j + kW <= n; j += kW) {
      __m256 x0 = _mm256_loadu_ps(c0 + j);
      for (std::size_t p = 0; p < k; ++p)
        x0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a0 + p), _mm256_loadu_ps(b + p * n + j), x0);
      _mm256_storeu_ps(c0 + j, x0);
    }
    for (; j < n; ++j) {
      float s0 = c0[j];
      for (std::size_t p = 0; p < k; ++p) s0 = __builtin_fmaf(a0[p], b[p * n + j], s0);
      c0[j] = s0;
    }
  }
}

HHFT_AVX2 void axpy_f64(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = __builtin_fma(alpha, x[i], y[i]);
}

HHFT_AVX2 void axpy_f32(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = __builtin_fmaf(alpha, x[i], y[i]);
}

HHFT_AVX2 double dot_f64(std::size_t n, const double* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s = __builtin_fma(x[i], y[i], s);
  return s;
}

HHFT_AVX2 float dot_f32(std::size_t n, const float* x, const float* y) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, acc);
  float s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
            ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; i < n; ++i) s = __builtin_fmaf(x[i], y[i], s);
  return s;
}

#undef HHFT_AVX2

}  // namespace

template <>
const KernelTable<double>& avx2_table<double>() {
  static const KernelTable<double> table{&gemm_nn_f64, &axpy_f64, &dot_f64};
  return table;
}

template <>
const KernelTable<float>& avx2_table<float>() {
  static const KernelTable<float> table{&gemm_nn_f32, &axpy_f32, &dot_f32};
  return table;
}

#else  // !HHFT_HAVE_X86

template <>
const KernelTable<double>& avx2_table<double>() {
  return scalar_table<double>();
}

template <>
const KernelTable<float>& avx2_table<float>() {
  return scalar_table<float>();
}

#endif

}  // namespace hhft::kernels
