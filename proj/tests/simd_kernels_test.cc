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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fewuser/random.h"
#include "fewuser/simd/kernels.h"
#include "fewuser/tensor.h"

namespace fewuser::simd {
namespace {

std::vector<const KernelTable*> VectorTables() {
  std::vector<const KernelTable*> out;
  if (const KernelTable* t = Avx2Kernels()) out.push_back(t);
  if (const KernelTable* t = NeonKernels()) out.push_back(t);
  return out;
}

std::vector<double> Random(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.Normal();
  return v;
}

// Entries agree to a few ulps of the accumulated magnitude.
void ExpectClose(const std::vector<double>& want, const std::vector<double>& got,
                 double magnitude) {
  ASSERT_EQ(want.size(), got.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_NEAR(want[i], got[i], 1e-13 * magnitude) << "at " << i;
  }
}

TEST(SimdKernelsTest, ScalarTableIsAlwaysAvailable) {
  EXPECT_EQ(ScalarKernels().isa, Isa::kScalar);
  EXPECT_EQ(&ForIsa(Isa::kScalar), &ScalarKernels());
  EXPECT_NE(Active().dot, nullptr);
}

TEST(SimdKernelsTest, UnavailableIsaThrows) {
  if (NeonKernels() == nullptr) {
    EXPECT_THROW(ForIsa(Isa::kNeon), std::invalid_argument);
  }
  if (Avx2Kernels() == nullptr) {
    EXPECT_THROW(ForIsa(Isa::kAvx2), std::invalid_argument);
  }
}

TEST(SimdKernelsTest, ScalarDotMatchesDefinition) {
  const double x[] = {1, 2, 3};
  const double y[] = {4, -5, 6};
  EXPECT_EQ(ScalarKernels().dot(x, y, 3), 12.0);
  EXPECT_EQ(ScalarKernels().dot(x, y, 0), 0.0);
}

TEST(SimdKernelsTest, DotAndAxpyMatchScalarOnAllTailLengths) {
  const auto tables = VectorTables();
  if (tables.empty()) GTEST_SKIP() << "no vector ISA on this CPU";
  for (const KernelTable* t : tables) {
    for (std::size_t n = 0; n <= 37; ++n) {
      const auto x = Random(n, 10 + n), y = Random(n, 100 + n);
      EXPECT_NEAR(ScalarKernels().dot(x.data(), y.data(), n), t->dot(x.data(), y.data(), n),
                  1e-13 * (1.0 + n))
          << IsaName(t->isa) << " n=" << n;
      auto y1 = y, y2 = y;
      ScalarKernels().axpy(0.75, x.data(), y1.data(), n);
      t->axpy(0.75, x.data(), y2.data(), n);
      ExpectClose(y1, y2, 4.0);
    }
  }
}

TEST(SimdKernelsTest, GemmVariantsMatchScalar) {
  const auto tables = VectorTables();
  if (tables.empty()) GTEST_SKIP() << "no vector ISA on this CPU";
  const std::size_t shapes[][3] = {
      {1, 1, 1}, {3, 5, 7}, {8, 32, 32}, {17, 9, 33}, {1, 64, 4096 / 64}};
  for (const KernelTable* t : tables) {
    for (const auto& s : shapes) {
      const std::size_t m = s[0], k = s[1], n = s[2];
      const auto a = Random(m * k, 1), b = Random(k * n, 2), c0 = Random(m * n, 3);
      auto want = c0, got = c0;
      ScalarKernels().gemm_nn(a.data(), b.data(), want.data(), m, k, n);
      t->gemm_nn(a.data(), b.data(), got.data(), m, k, n);
      ExpectClose(want, got, 4.0 * k);

      const auto bt = Random(n * k, 4);
      want = c0, got = c0;
      ScalarKernels().gemm_nt(a.data(), bt.data(), want.data(), m, k, n);
      t->gemm_nt(a.data(), bt.data(), got.data(), m, k, n);
      ExpectClose(want, got, 4.0 * k);

      const auto at = Random(k * m, 5);
      want = c0, got = c0;
      ScalarKernels().gemm_tn(at.data(), b.data(), want.data(), m, k, n);
      t->gemm_tn(at.data(), b.data(), got.data(), m, k, n);
      ExpectClose(want, got, 4.0 * k);
    }
  }
}

TEST(SimdKernelsTest, ScalarGemmMatchesTripleLoop) {
  const std::size_t m = 4, k = 3, n = 5;
  const auto a = Random(m * k, 7), b = Random(k * n, 8);
  std::vector<double> c(m * n, 0.0), ref(m * n, 0.0);
  ScalarKernels().gemm_nn(a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * b[p * n + j];
  ExpectClose(ref, c, 4.0 * k);
}

TEST(SimdKernelsTest, MatrixHelpersCheckShapes) {
  Matrix a(2, 3), b(2, 3), out(2, 2);
  EXPECT_THROW(GemmAccumulate(a, b, out), std::invalid_argument);
  EXPECT_NO_THROW(GemmNTAccumulate(a, b, out));
}

}  // namespace
}  // namespace fewuser::simd
