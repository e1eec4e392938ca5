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

#include "fewuser/optim.h"

#include <cmath>
#include <stdexcept>

namespace fewuser {

AdamW::AdamW(ParamSet params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0) || config_.weight_decay < 0.0 || !(config_.eps > 0.0) ||
      config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
      config_.beta2 >= 1.0) {
    throw std::invalid_argument("invalid AdamW hyperparameters");
  }
  for (const NamedParam& p : params_.items()) {
    m_.emplace_back(p.var.rows(), p.var.cols());
    v_.emplace_back(p.var.rows(), p.var.cols());
  }
}

void AdamW::Step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  const double step_size = config_.lr / bias1;
  const double decay = 1.0 - config_.lr * config_.weight_decay;
  const double sqrt_bias2 = std::sqrt(bias2);

  auto items = params_.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    ad::Var var = items[i].var;
    const Matrix g = var.grad();
    Matrix& p = var.mutable_value();
    auto m = m_[i].flat();
    auto v = v_[i].flat();
    auto pv = p.flat();
    auto gv = g.flat();
    for (std::size_t j = 0; j < pv.size(); ++j) {
      pv[j] *= decay;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gv[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gv[j] * gv[j];
      const double denom = std::sqrt(v[j]) / sqrt_bias2 + config_.eps;
      pv[j] -= step_size * m[j] / denom;
    }
  }
}

}  // namespace fewuser
