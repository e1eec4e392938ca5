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

#ifndef FEWUSER_PARAMS_H_
#define FEWUSER_PARAMS_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fewuser/autodiff.h"
#include "fewuser/random.h"
#include "json.hpp"

namespace fewuser {

struct NamedParam {
  std::string name;
  ad::Var var;
};

// Ordered collection of trainable leaves. Copies share the underlying nodes,
// so a merged set built with Extend updates the owners' parameters in place.
class ParamSet {
 public:
  ad::Var Add(std::string name, Matrix init);
  void Extend(const ParamSet& other, std::string_view prefix = {});

  std::span<const NamedParam> items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const ad::Var* Find(std::string_view name) const;

  std::size_t ScalarCount() const;
  void ZeroGrad();
  bool GradsFinite() const;

  std::vector<Matrix> Snapshot() const;
  void Restore(const std::vector<Matrix>& values);
  // Sum of node versions; changes whenever any parameter is written.
  std::uint64_t Version() const;

 private:
  std::vector<NamedParam> items_;
};

// {name: {"rows", "cols", "data"}} in set order. Doubles print with
// round-trip precision, so LoadParams(SaveParams(p)) is exact.
nlohmann::ordered_json ParamsToJson(const ParamSet& params);
// Overwrites values of an already-shaped set; names and shapes must match.
void ParamsFromJson(const ParamSet& params, const nlohmann::ordered_json& j);

Matrix GaussianMatrix(std::size_t rows, std::size_t cols, double stddev,
                      Rng& rng);

}  // namespace fewuser

#endif  // FEWUSER_PARAMS_H_
