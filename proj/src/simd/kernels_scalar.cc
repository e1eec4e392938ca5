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
#include "gemm_impl.h"

namespace fewuser::simd {
namespace {

double DotScalar(const double* x, const double* y, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

void AxpyScalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const KernelTable& ScalarKernels() {
  static const KernelTable table{
      Isa::kScalar,
      &DotScalar,
      &AxpyScalar,
      &internal::GemmNN<&AxpyScalar>,
      &internal::GemmNT<&DotScalar>,
      &internal::GemmTN<&AxpyScalar>,
  };
  return table;
}

}  // namespace fewuser::simd
