// Copyright 2026 The FewUser Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fewuser/simd/kernels.h"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

#include "gemm_impl.h"

#define FEWUSER_AVX2_TARGET __attribute__((target("avx2,fma")))

namespace fewuser::simd {
namespace {

FEWUSER_AVX2_TARGET double DotAvx2(const double* x, const double* y,
                                   std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                           _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  const __m128d lo = _mm256_castpd256_pd128(acc0);
  const __m128d hi = _mm256_extractf128_pd(acc0, 1);
  __m128d pair = _mm_add_pd(lo, hi);
  pair = _mm_add_sd(pair, _mm_unpackhi_pd(pair, pair));
  double sum = _mm_cvtsd_f64(pair);
  for (; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

FEWUSER_AVX2_TARGET void AxpyAvx2(double a, const double* x, double* y,
                                  std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

FEWUSER_AVX2_TARGET void GemmNNAvx2(const double* a, const double* b, double* c,
                                    std::size_t m, std::size_t k,
                                    std::size_t n) {
  internal::GemmNN<&AxpyAvx2>(a, b, c, m, k, n);
}

FEWUSER_AVX2_TARGET void GemmNTAvx2(const double* a, const double* b, double* c,
                                    std::size_t m, std::size_t k,
                                    std::size_t n) {
  internal::GemmNT<&DotAvx2>(a, b, c, m, k, n);
}

FEWUSER_AVX2_TARGET void GemmTNAvx2(const double* a, const double* b, double* c,
                                    std::size_t m, std::size_t k,
                                    std::size_t n) {
  internal::GemmTN<&AxpyAvx2>(a, b, c, m, k, n);
}

}  // namespace

const KernelTable* Avx2Kernels() {
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  static const KernelTable table{
      Isa::kAvx2, &DotAvx2, &AxpyAvx2, &GemmNNAvx2, &GemmNTAvx2, &GemmTNAvx2,
  };
  return supported ? &table : nullptr;
}

}  // namespace fewuser::simd

#else

namespace fewuser::simd {
const KernelTable* Avx2Kernels() { return nullptr; }
}  // namespace fewuser::simd

#endif
