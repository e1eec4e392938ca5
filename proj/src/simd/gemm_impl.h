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

#ifndef FEWUSER_SRC_SIMD_GEMM_IMPL_H_
#define FEWUSER_SRC_SIMD_GEMM_IMPL_H_

#include <cstddef>

// Loop nests shared by every ISA; only the inner dot/axpy differ.
namespace fewuser::simd::internal {

template <auto Axpy>
inline void GemmNN(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * n;
    const double* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a_row[p];
      if (s != 0.0) Axpy(s, b + p * n, c_row, n);
    }
  }
}

template <auto Dot>
inline void GemmNT(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] += Dot(a + i * k, b + j * k, k);
    }
  }
}

template <auto Axpy>
inline void GemmTN(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* a_row = a + p * m;
    const double* b_row = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = a_row[i];
      if (s != 0.0) Axpy(s, b_row, c + i * n, n);
    }
  }
}

}  // namespace fewuser::simd::internal

#endif  // FEWUSER_SRC_SIMD_GEMM_IMPL_H_
