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

#if defined(__aarch64__)
#include <arm_neon.h>

#include "gemm_impl.h"

namespace fewuser::simd {
namespace {

double DotNeon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

void AxpyNeon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

// Advanced SIMD is mandatory on AArch64.
const KernelTable* NeonKernels() {
  static const KernelTable table{
      Isa::kNeon,
      &DotNeon,
      &AxpyNeon,
      &internal::GemmNN<&AxpyNeon>,
      &internal::GemmNT<&DotNeon>,
      &internal::GemmTN<&AxpyNeon>,
  };
  return &table;
}

}  // namespace fewuser::simd

#else

namespace fewuser::simd {
const KernelTable* NeonKernels() { return nullptr; }
}  // namespace fewuser::simd

#endif
