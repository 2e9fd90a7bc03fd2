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

#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "hhft/error.hpp"
#include "hhft/kernels.hpp"

namespace hhft::kernels {
namespace {

Isa probe_isa() {
#if (defined(__GNUC__) || defined(__clang__)) && (defined(__x86_64__) || defined(_M_X64))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::kAvx2;
#endif
  return Isa::kScalar;
}

Isa initial_isa() {
  const Isa best = probe_isa();
  if (const char* env = std::getenv("HHFT_ISA"); env != nullptr && std::string(env) == "scalar")
    return Isa::kScalar;
  return best;
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

template <class T>
std::vector<T>& scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

Isa detected_isa() {
  static const Isa isa = probe_isa();
  return isa;
}

Isa active_isa() {
  return active_slot().load(std::memory_order_relaxed);
}

void set_active_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2)
    throw ContractError("AVX2 kernels requested but the host CPU does not support avx2+fma");
  active_slot().store(isa, std::memory_order_relaxed);
}

template <class T>
const KernelTable<T>& active_table() {
  return active_isa() == Isa::kAvx2 ? avx2_table<T>() : scalar_table<T>();
}

template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  constexpr std::size_t kTile = 16;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile)
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile)
      for (std::size_t r = r0; r < rows && r < r0 + kTile; ++r)
        for (std::size_t c = c0; c < cols && c < c0 + kTile; ++c) out[c * rows + r] = in[r * cols + c];
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  auto& bt = scratch<T>();
  bt.resize(k * n);
  transpose(n, k, b, bt.data());
  gemm_nn(m, n, k, a, bt.data(), c);
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  auto& at = scratch<T>();
  at.resize(k * m);
  transpose(k, m, a, at.data());
  gemm_nn(m, n, k, at.data(), b, c);
}

#define HHFT_INSTANTIATE(T)                                                                 \
  template const KernelTable<T>& active_table<T>();                                         \
  template void transpose<T>(std::size_t, std::size_t, const T*, T*);                       \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);

HHFT_INSTANTIATE(float)
HHFT_INSTANTIATE(double)
#undef HHFT_INSTANTIATE

}  // namespace hhft::kernels
