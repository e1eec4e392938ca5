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

#ifndef FEWUSER_OPTIM_H_
#define FEWUSER_OPTIM_H_

#include <cstddef>
#include <vector>

#include "fewuser/params.h"

namespace fewuser {

struct AdamWConfig {
  double lr = 8e-6;
  double beta1 = 0.85;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Each step first shrinks p by
// (1 - lr * weight_decay), then applies the bias-corrected Adam update.
class AdamW {
 public:
  AdamW(ParamSet params, AdamWConfig config);

  const AdamWConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }

  // Consumes the current gradients; does not zero them.
  void Step();

 private:
  ParamSet params_;
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace fewuser

#endif  // FEWUSER_OPTIM_H_
