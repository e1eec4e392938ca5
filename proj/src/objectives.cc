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

#include "fewuser/objectives.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fewuser/errors.h"
#include "fewuser/random.h"

namespace fewuser::objectives {
namespace {

void CheckFinite(std::span<const double> scores, const char* what) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError(std::string(what) + ": non-finite score");
  }
}

double SoftmaxCe(std::span<const double> logits, std::size_t gold) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - mx);
  return mx + std::log(total) - logits[gold];
}

Matrix Init(std::size_t rows, std::size_t cols, Rng& rng) {
  return GaussianMatrix(rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)), rng);
}

}  // namespace

double ContrastiveLoss(std::span<const double> scores, std::size_t gold, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (gold >= scores.size()) throw std::invalid_argument("gold index out of range");
  CheckFinite(scores, "contrastive loss");
  std::vector<double> scaled(scores.begin(), scores.end());
  for (double& s : scaled) s /= tau;
  return SoftmaxCe(scaled, gold);
}

ad::Var ContrastiveLoss(const ad::Var& scores, std::size_t gold, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  CheckFinite(scores.value().flat(), "contrastive loss");
  return ad::SoftmaxCrossEntropy(ad::Scale(scores, 1.0 / tau), gold);
}

double MatchingLoss(std::span<const double> scores) {
  if (scores.size() < 2) throw std::invalid_argument("matching loss needs k >= 1 negatives");
  CheckFinite(scores, "matching loss");
  return SoftmaxCe(scores, 0);
}

ad::Var MatchingLoss(const ad::Var& scores) {
  if (scores.cols() < 2) throw std::invalid_argument("matching loss needs k >= 1 negatives");
  CheckFinite(scores.value().flat(), "matching loss");
  return ad::SoftmaxCrossEntropy(scores, 0);
}

std::vector<std::size_t> MineNegatives(std::span<const double> scores, std::size_t gold,
                                       const MiningPolicy& policy, double tau,
                                       std::uint64_t seed) {
  const std::size_t n = scores.size();
  if (gold >= n) throw std::invalid_argument("gold index out of range");
  if (policy.k > n - 1) {
    throw std::invalid_argument("cannot mine " + std::to_string(policy.k) +
                                " negatives from " + std::to_string(n - 1) + " candidates");
  }
  std::vector<std::size_t> candidates;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (j == gold) continue;
    if (std::isnan(scores[j])) throw NumericError("mining: NaN similarity score");
    candidates.push_back(j);
    best = std::max(best, scores[j]);
  }
  if (policy.k == 0) return {};
  if (!std::isfinite(best)) throw NumericError("mining: every non-gold score is -inf");

  if (policy.kind == MiningKind::kTop) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    candidates.resize(policy.k);
    return candidates;
  }

  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  std::vector<double> weights;
  weights.reserve(candidates.size());
  for (std::size_t j : candidates) weights.push_back(std::exp((scores[j] - best) / tau));
  Rng rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(policy.k);
  for (std::size_t draw = 0; draw < policy.k; ++draw) {
    double total = 0.0;
    for (double w : weights) total += std::max(w, 0.0);
    std::size_t choice = weights.size();
    if (total > 0.0) {
      const double target = rng.Uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        choice = i;
        if (target < acc) break;
      }
    } else {
      // Only underflowed weights remain: fall back to uniform among them.
      std::vector<std::size_t> open;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] >= 0.0) open.push_back(i);
      }
      choice = open[rng.UniformIndex(open.size())];
    }
    picked.push_back(candidates[choice]);
    weights[choice] = -1.0;  // removed
  }
  return picked;
}

MatchHead::MatchHead(MatchFusion fusion, std::size_t hidden, std::uint64_t seed)
    : fusion_(fusion), hidden_(hidden) {
  const std::size_t h = hidden;
  Rng rng(MixSeed(seed, 0x3A7C));
  switch (fusion) {
    case MatchFusion::kConcat: {
      const std::size_t bottleneck = std::max<std::size_t>(1, h / 2);
      w_ = {params_.Add("concat.adapter.down.w", Init(2 * h, bottleneck, rng)),
            params_.Add("concat.adapter.down.b", Matrix(1, bottleneck)),
            params_.Add("concat.adapter.up.w", Init(bottleneck, 2 * h, rng)),
            params_.Add("concat.adapter.up.b", Matrix(1, 2 * h)),
            params_.Add("concat.proj.w", Init(2 * h, h, rng)),
            params_.Add("concat.proj.b", Matrix(1, h))};
      break;
    }
    case MatchFusion::kSum: {
      const std::size_t bottleneck = std::max<std::size_t>(1, h / 4);
      w_ = {params_.Add("sum.adapter.down.w", Init(h, bottleneck, rng)),
            params_.Add("sum.adapter.down.b", Matrix(1, bottleneck)),
            params_.Add("sum.adapter.up.w", Init(bottleneck, h, rng)),
            params_.Add("sum.adapter.up.b", Matrix(1, h))};
      break;
    }
    case MatchFusion::kCrossAttention:
      w_ = {params_.Add("ca.wv", Init(h, h, rng)), params_.Add("ca.wo", Init(h, h, rng)),
            params_.Add("ca.ffn.w1", Init(h, 2 * h, rng)),
            params_.Add("ca.ffn.b1", Matrix(1, 2 * h)),
            params_.Add("ca.ffn.w2", Init(2 * h, h, rng)),
            params_.Add("ca.ffn.b2", Matrix(1, h))};
      break;
  }
  scorer_w_ = params_.Add("scorer.w", Init(1, h, rng));
  scorer_b_ = params_.Add("scorer.b", Matrix(1, 1));
}

ad::Var MatchHead::FusePairs(const ad::Var& user, const ad::Var& locations) const {
  if (user.rows() != 1 || user.cols() != hidden_ || locations.cols() != hidden_ ||
      locations.rows() == 0) {
    throw std::invalid_argument("match head expects user [1 x H] and locations [n x H], got " +
                                user.value().ShapeString() + " and " +
                                locations.value().ShapeString());
  }
  const ad::Var users = ad::RepeatRows(user, locations.rows());
  switch (fusion_) {
    case MatchFusion::kConcat: {
      const ad::Var x = ad::ConcatCols(users, locations);
      const ad::Var down = ad::Tanh(ad::AddBias(ad::MatMul(x, w_[0]), w_[1]));
      const ad::Var adapted = ad::Add(x, ad::AddBias(ad::MatMul(down, w_[2]), w_[3]));
      return ad::Tanh(ad::AddBias(ad::MatMul(adapted, w_[4]), w_[5]));
    }
    case MatchFusion::kSum: {
      const ad::Var s = ad::Add(users, locations);
      const ad::Var down = ad::Tanh(ad::AddBias(ad::MatMul(s, w_[0]), w_[1]));
      return ad::Add(s, ad::AddBias(ad::MatMul(down, w_[2]), w_[3]));
    }
    case MatchFusion::kCrossAttention: {
      // The user queries a length-1 key/value sequence, so the attention
      // weight is identically 1 and the block reduces to its value path.
      const ad::Var attended = ad::Add(users, ad::MatMul(ad::MatMul(locations, w_[0]), w_[1]));
      const ad::Var ffn = ad::AddBias(
          ad::MatMul(ad::Tanh(ad::AddBias(ad::MatMul(attended, w_[2]), w_[3])), w_[4]), w_[5]);
      return ad::Add(attended, ffn);
    }
  }
  throw std::logic_error("unhandled match fusion");
}

ad::Var MatchHead::Scores(const ad::Var& user, const ad::Var& locations) const {
  const ad::Var fused = FusePairs(user, locations);
  const ad::Var raw = ad::MatMulNT(scorer_w_, fused);
  const ad::Var ones = ad::Constant(Matrix(1, locations.rows(), 1.0));
  return ad::Add(raw, ad::MatMul(scorer_b_, ones));
}

ClassHead::ClassHead(std::size_t hidden, std::size_t classes, std::uint64_t seed) {
  if (classes == 0) throw std::invalid_argument("class head needs K >= 1");
  Rng rng(MixSeed(seed, 0xC1A5));
  weight_ = params_.Add("class.w", Init(hidden, classes, rng));
  bias_ = params_.Add("class.b", Matrix(1, classes));
}

ad::Var ClassHead::Logits(const ad::Var& user) const {
  return ad::AddBias(ad::MatMul(user, weight_), bias_);
}

ad::Var ClassLoss(const ClassHead& head, const ad::Var& user, std::size_t gold) {
  const ad::Var logits = head.Logits(user);
  CheckFinite(logits.value().flat(), "class loss");
  return ad::SoftmaxCrossEntropy(logits, gold);
}

JointLossTerms JointLoss(const ad::Var& user, const ad::Var& locations, std::size_t gold,
                         double tau, const MiningPolicy& mining, const MatchHead* head,
                         std::uint64_t seed) {
  const ad::Var scores = ad::MatMulNT(user, locations);
  JointLossTerms out;
  out.total = ContrastiveLoss(scores, gold, tau);
  out.contrast = out.total.scalar();
  const std::size_t k = std::min(mining.k, locations.rows() - 1);
  if (head == nullptr || k == 0) return out;

  const std::vector<std::size_t> negatives =
      MineNegatives(scores.value().row(0), gold, {mining.kind, k}, tau, seed);
  std::vector<std::size_t> rows = {gold};
  rows.insert(rows.end(), negatives.begin(), negatives.end());
  std::vector<ad::Var> picked;
  for (std::size_t r : rows) picked.push_back(ad::Row(locations, r));
  const ad::Var match = MatchingLoss(head->Scores(user, ad::ConcatRows(picked)));
  out.match = match.scalar();
  out.total = ad::Add(out.total, match);
  return out;
}

std::string_view Name(MiningKind kind) {
  return kind == MiningKind::kTop ? "top" : "multinomial";
}

std::string_view Name(MatchFusion fusion) {
  switch (fusion) {
    case MatchFusion::kCrossAttention:
      return "CA";
    case MatchFusion::kSum:
      return "Sum";
    case MatchFusion::kConcat:
      return "Concat";
  }
  return "?";
}

MiningKind ParseMiningKind(std::string_view name) {
  if (name == "multinomial") return MiningKind::kMultinomial;
  if (name == "top") return MiningKind::kTop;
  throw ConfigError("unknown mining policy '" + std::string(name) + "'");
}

MatchFusion ParseMatchFusion(std::string_view name) {
  if (name == "CA") return MatchFusion::kCrossAttention;
  if (name == "Sum") return MatchFusion::kSum;
  if (name == "Concat") return MatchFusion::kConcat;
  throw ConfigError("unknown match fusion '" + std::string(name) + "'");
}

}  // namespace fewuser::objectives
