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

// Dense BLAS-like kernels backing every matmul in the autodiff engine.
//
// Each kernel exists as a portable scalar reference and as an AVX2+FMA
// variant. The variant is chosen once at startup from CPUID; setting the
// environment variable HHFT_ISA=scalar forces the reference path. All
// matrices are contiguous row-major.

#include <cstddef>
#include <string_view>

namespace hhft::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// Best ISA the host supports.
Isa detected_isa();
// ISA currently used by the dispatching entry points below.
Isa active_isa();
// Throws ContractError if the host cannot run `isa`.
void set_active_isa(Isa isa);

template <class T>
struct KernelTable {
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  T (*dot)(std::size_t n, const T* x, const T* y);
};

template <class T>
const KernelTable<T>& scalar_table();
// Only valid to call through when detected_isa() == Isa::kAvx2.
template <class T>
const KernelTable<T>& avx2_table();
template <class T>
const KernelTable<T>& active_table();

// C[m x n] += A[m x k] * B[k x n]
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  active_table<T>().gemm_nn(m, n, k, a, b, c);
}

// C[m x n] += A[m x k] * B^T, with B stored as [n x k].
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

// C[m x n] += A^T * B, with A stored as [k x m] and B as [k x n].
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  active_table<T>().axpy(n, alpha, x, y);
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
  return active_table<T>().dot(n, x, y);
}

// out[cols x rows] = in[rows x cols]^T
template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out);

}  // namespace hhft::kernels
