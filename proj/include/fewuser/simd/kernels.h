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

#ifndef FEWUSER_SIMD_KERNELS_H_
#define FEWUSER_SIMD_KERNELS_H_

// Dense double-precision kernels behind every matrix product in the library.
//
// Each kernel has a scalar reference implementation and vectorized variants
// (AVX2+FMA on x86-64, NEON on AArch64). One table is chosen per process at
// first use: the best variant the CPU supports, unless FEWUSER_ISA names one
// explicitly ("scalar", "avx2", "neon"). Variants agree to rounding, not
// bitwise, so replays are byte-identical only under the same ISA; run
// manifests record it.

#include <cstddef>
#include <string_view>

namespace fewuser::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view IsaName(Isa isa);

struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
};

const KernelTable& ScalarKernels();
// Null when the variant is not compiled in or the CPU lacks the extension.
const KernelTable* Avx2Kernels();
const KernelTable* NeonKernels();

// The process-wide table. Thread-safe; resolved once.
const KernelTable& Active();

// Table for an explicit ISA; throws std::invalid_argument if unavailable.
const KernelTable& ForIsa(Isa isa);

}  // namespace fewuser::simd

#endif  // FEWUSER_SIMD_KERNELS_H_
