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

#include "fewuser/params.h"

#include <stdexcept>

namespace fewuser {

ad::Var ParamSet::Add(std::string name, Matrix init) {
  for (const auto& p : items_) {
    if (p.name == name) throw std::logic_error("duplicate parameter " + name);
  }
  items_.push_back({std::move(name), ad::Var::Parameter(std::move(init))});
  return items_.back().var;
}

void ParamSet::Extend(const ParamSet& other, std::string_view prefix) {
  for (const auto& p : other.items_) {
    std::string name = std::string(prefix) + p.name;
    if (Find(name) != nullptr) {
      throw std::logic_error("duplicate parameter " + name);
    }
    items_.push_back({std::move(name), p.var});
  }
}

const ad::Var* ParamSet::Find(std::string_view name) const {
  for (const auto& p : items_) {
    if (p.name == name) return &p.var;
  }
  return nullptr;
}

std::size_t ParamSet::ScalarCount() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.var.value().size();
  return n;
}

void ParamSet::ZeroGrad() {
  for (auto& p : items_) p.var.ZeroGrad();
}

bool ParamSet::GradsFinite() const {
  for (const auto& p : items_) {
    if (!p.var.node()->grad.AllFinite()) return false;
  }
  return true;
}

std::vector<Matrix> ParamSet::Snapshot() const {
  std::vector<Matrix> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.var.value());
  return out;
}

void ParamSet::Restore(const std::vector<Matrix>& values) {
  if (values.size() != items_.size()) {
    throw std::invalid_argument("ParamSet::Restore: snapshot has " +
                                std::to_string(values.size()) +
                                " tensors, expected " +
                                std::to_string(items_.size()));
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (!values[i].SameShape(items_[i].var.value())) {
      throw std::invalid_argument("ParamSet::Restore: shape mismatch for " +
                                  items_[i].name);
    }
    items_[i].var.mutable_value() = values[i];
  }
}

std::uint64_t ParamSet::Version() const {
  std::uint64_t v = 0;
  for (const auto& p : items_) v += p.var.version();
  return v;
}

nlohmann::ordered_json ParamsToJson(const ParamSet& params) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& p : params.items()) {
    const Matrix& m = p.var.value();
    out[p.name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.storage()}};
  }
  return out;
}

void ParamsFromJson(const ParamSet& params, const nlohmann::ordered_json& j) {
  if (!j.is_object() || j.size() != params.size()) {
    throw std::invalid_argument("checkpoint parameter set does not match model");
  }
  for (const auto& p : params.items()) {
    if (!j.contains(p.name)) {
      throw std::invalid_argument("checkpoint is missing parameter " + p.name);
    }
    const auto& entry = j.at(p.name);
    Matrix m(entry.at("rows").get<std::size_t>(), entry.at("cols").get<std::size_t>(),
             entry.at("data").get<std::vector<double>>());
    if (!m.SameShape(p.var.value())) {
      throw std::invalid_argument("checkpoint shape mismatch for " + p.name);
    }
    ad::Var target = p.var;
    target.mutable_value() = std::move(m);
  }
}

Matrix GaussianMatrix(std::size_t rows, std::size_t cols, double stddev,
                      Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = stddev * rng.Normal();
  return m;
}

}  // namespace fewuser
