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

#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fewuser/simd/kernels.h"

namespace fewuser::simd {

std::string_view IsaName(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

const KernelTable& ForIsa(Isa isa) {
  const KernelTable* table = nullptr;
  switch (isa) {
    case Isa::kScalar:
      return ScalarKernels();
    case Isa::kAvx2:
      table = Avx2Kernels();
      break;
    case Isa::kNeon:
      table = NeonKernels();
      break;
  }
  if (table == nullptr) {
    throw std::invalid_argument("ISA not available on this machine: " +
                                std::string(IsaName(isa)));
  }
  return *table;
}

namespace {

const KernelTable& Resolve() {
  if (const char* env = std::getenv("FEWUSER_ISA"); env != nullptr && *env) {
    const std::string name(env);
    if (name == "scalar") return ForIsa(Isa::kScalar);
    if (name == "avx2") return ForIsa(Isa::kAvx2);
    if (name == "neon") return ForIsa(Isa::kNeon);
    throw std::invalid_argument("FEWUSER_ISA: unknown ISA '" + name + "'");
  }
  if (const KernelTable* t = Avx2Kernels()) return *t;
  if (const KernelTable* t = NeonKernels()) return *t;
  return ScalarKernels();
}

}  // namespace

const KernelTable& Active() {
  static const KernelTable& table = Resolve();
  return table;
}

}  // namespace fewuser::simd
