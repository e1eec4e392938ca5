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

#ifndef FEWUSER_AUTODIFF_H_
#define FEWUSER_AUTODIFF_H_

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// Every op returns a Var whose node remembers its inputs and a backward
// closure, but only while gradient recording is enabled and at least one
// input requires a gradient. Leaves created with Var::Parameter persist across
// graphs and accumulate gradients until ZeroGrad.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fewuser/tensor.h"

namespace fewuser::ad {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  // Bumped on every write through Var::mutable_value; keys derived caches.
  std::uint64_t version = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Matrix& EnsureGrad();
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  static Var Parameter(Matrix value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Direct write access for optimizers, initializers and finite differences.
  Matrix& mutable_value() {
    ++node_->version;
    return node_->value;
  }
  std::uint64_t version() const { return node_->version; }
  // Gradient so far; an all-zero matrix when nothing has flowed in.
  Matrix grad() const;
  void ZeroGrad();
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double scalar() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

// Seeds d(root)/d(root) = 1 and propagates. root must be 1 x 1.
void Backward(const Var& root);

Var Constant(Matrix value);

Var MatMul(const Var& a, const Var& b);    // a * b
Var MatMulNT(const Var& a, const Var& b);  // a * b^T
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);  // elementwise
Var Scale(const Var& a, double s);
// a [m x n] + bias [1 x n] broadcast over rows.
Var AddBias(const Var& a, const Var& bias);
Var Tanh(const Var& a);
Var Sigmoid(const Var& a);
// Elementwise multiply by a constant mask (dropout).
Var MulConstant(const Var& a, Matrix mask);

Var SoftmaxRows(const Var& a);
// Row-wise layer normalization with learned gain/bias [1 x n].
Var LayerNormRows(const Var& a, const Var& gain, const Var& bias,
                  double eps = 1e-5);

Var SliceRows(const Var& a, std::size_t begin, std::size_t count);
Var Row(const Var& a, std::size_t i);
Var SliceCols(const Var& a, std::size_t begin, std::size_t count);
Var GatherRows(const Var& table, std::span<const std::size_t> ids);
Var ConcatRows(std::span<const Var> parts);
Var ConcatCols(const Var& a, const Var& b);
Var RepeatRows(const Var& row, std::size_t count);
Var MeanRows(const Var& a);
Var Sum(const Var& a);

// -log softmax(logits)[gold] for a 1 x n row, computed with max-subtraction.
Var SoftmaxCrossEntropy(const Var& logits, std::size_t gold);

}  // namespace fewuser::ad

#endif  // FEWUSER_AUTODIFF_H_
