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

#ifndef FEWUSER_OBJECTIVES_H_
#define FEWUSER_OBJECTIVES_H_

// Contrastive (InfoNCE over all K locations) and (k+1)-way matching losses,
// hard-negative mining, pair-fusion match heads and the classification
// baseline head.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fewuser/autodiff.h"
#include "fewuser/params.h"

namespace fewuser::objectives {

// -log softmax(scores / tau)[gold], max-subtracted. Throws NumericError on
// non-finite scores and std::invalid_argument on tau <= 0 or bad gold.
double ContrastiveLoss(std::span<const double> scores, std::size_t gold, double tau);
ad::Var ContrastiveLoss(const ad::Var& scores, std::size_t gold, double tau);

// Cross-entropy against the one-hot target at position 0 (the gold pair).
double MatchingLoss(std::span<const double> scores);
ad::Var MatchingLoss(const ad::Var& scores);

enum class MiningKind { kMultinomial, kTop };

struct MiningPolicy {
  MiningKind kind = MiningKind::kMultinomial;
  std::size_t k = 6;
};

// k distinct non-gold indices. Top: highest scores, ties to the lower index.
// Multinomial: sequential draws without replacement with probability
// proportional to exp(score / tau) over the remaining non-gold indices.
std::vector<std::size_t> MineNegatives(std::span<const double> scores, std::size_t gold,
                                       const MiningPolicy& policy, double tau,
                                       std::uint64_t seed);

enum class MatchFusion { kCrossAttention, kSum, kConcat };

// Scores a user against k+1 candidate locations (gold first).
class MatchHead {
 public:
  MatchHead(MatchFusion fusion, std::size_t hidden, std::uint64_t seed);

  MatchFusion fusion() const { return fusion_; }
  const ParamSet& params() const { return params_; }

  // Fused pair representations, [(k+1) x H].
  ad::Var FusePairs(const ad::Var& user, const ad::Var& locations) const;
  // score[i] = scorer(fuse(user, locations[i])), [1 x (k+1)].
  ad::Var Scores(const ad::Var& user, const ad::Var& locations) const;

 private:
  MatchFusion fusion_;
  std::size_t hidden_;
  ParamSet params_;
  std::vector<ad::Var> w_;
  ad::Var scorer_w_;  // [1 x H]
  ad::Var scorer_b_;  // [1 x 1]
};

// Affine H -> K head for the classification baseline.
class ClassHead {
 public:
  ClassHead(std::size_t hidden, std::size_t classes, std::uint64_t seed);

  const ParamSet& params() const { return params_; }
  std::size_t classes() const { return weight_.cols(); }
  ad::Var Logits(const ad::Var& user) const;  // [1 x K]

 private:
  ParamSet params_;
  ad::Var weight_;  // [H x K]
  ad::Var bias_;    // [1 x K]
};

ad::Var ClassLoss(const ClassHead& head, const ad::Var& user, std::size_t gold);

struct JointLossTerms {
  ad::Var total;
  double contrast = 0.0;
  double match = 0.0;
};

// L = L_contrast + L_match for one user. scores = user . locations^T over
// all K rows; negatives are mined from those scores with `seed`. k = 0
// disables the matching term.
JointLossTerms JointLoss(const ad::Var& user, const ad::Var& locations, std::size_t gold,
                         double tau, const MiningPolicy& mining, const MatchHead* head,
                         std::uint64_t seed);

std::string_view Name(MiningKind kind);
std::string_view Name(MatchFusion fusion);
MiningKind ParseMiningKind(std::string_view name);
MatchFusion ParseMatchFusion(std::string_view name);

}  // namespace fewuser::objectives

#endif  // FEWUSER_OBJECTIVES_H_
