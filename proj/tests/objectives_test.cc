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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "fewuser/errors.h"
#include "fewuser/objectives.h"
#include "test_util.h"

namespace fewuser::objectives {
namespace {

#include "oracles/loss_cases.inc"

using fewuser::testing::GradientError;
using fewuser::testing::MaxGradientError;
using fewuser::testing::RandomMatrix;

constexpr MatchFusion kAllMatchFusions[] = {MatchFusion::kCrossAttention, MatchFusion::kSum,
                                            MatchFusion::kConcat};

TEST(ContrastiveLossTest, UniformScoresGiveLogK) {
  for (std::size_t k : {2u, 10u, 100u}) {
    const std::vector<double> s(k, 0.37);
    EXPECT_NEAR(ContrastiveLoss(s, k / 2, 0.03), std::log(static_cast<double>(k)), 1e-9);
  }
  EXPECT_EQ(ContrastiveLoss(std::vector<double>{4.2}, 0, 0.03), 0.0);
}

TEST(ContrastiveLossTest, MatchesHighPrecisionOracle) {
  for (const auto& c : kContrastiveCases) {
    EXPECT_NEAR(ContrastiveLoss(c.scores, c.gold, c.tau), c.loss, 1e-10 * std::max(1.0, c.loss));
    const ad::Var v(Matrix::RowVector(c.scores));
    EXPECT_NEAR(ContrastiveLoss(v, c.gold, c.tau).scalar(), c.loss, 1e-10 * std::max(1.0, c.loss));
  }
}

TEST(ContrastiveLossTest, ShiftInvarianceAndMonotonicity) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(12);
    for (double& x : s) x = rng.Normal();
    const double base = ContrastiveLoss(s, 3, 0.03);
    std::vector<double> shifted = s;
    const double c = 10.0 * rng.Normal();
    for (double& x : shifted) x += c;
    EXPECT_NEAR(ContrastiveLoss(shifted, 3, 0.03), base, 1e-9);
    // A moderate temperature keeps the loss away from exact underflow.
    std::vector<double> up = s;
    up[3] += 0.01;
    EXPECT_LT(ContrastiveLoss(up, 3, 0.5), ContrastiveLoss(s, 3, 0.5));
  }
}

TEST(ContrastiveLossTest, ArgminIsAtGoldMaximum) {
  const std::vector<double> s = {0.1, 0.7, 0.4, -0.2};
  std::size_t best = 0;
  for (std::size_t g = 1; g < s.size(); ++g) {
    if (ContrastiveLoss(s, g, 0.5) < ContrastiveLoss(s, best, 0.5)) best = g;
  }
  EXPECT_EQ(best, 1u);
}

TEST(ContrastiveLossTest, RejectsBadInput) {
  const std::vector<double> s = {0.0, 1.0};
  EXPECT_THROW(ContrastiveLoss(s, 0, 0.0), std::invalid_argument);
  EXPECT_THROW(ContrastiveLoss(s, 2, 1.0), std::invalid_argument);
  EXPECT_THROW(ContrastiveLoss(std::vector<double>{0.0, NAN}, 0, 1.0), NumericError);
}

TEST(MatchingLossTest, UniformScoresGiveLogKPlusOne) {
  EXPECT_NEAR(MatchingLoss(std::vector<double>(7, -1.25)), std::log(7.0), 1e-9);
  EXPECT_THROW(MatchingLoss(std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(MatchingLoss(std::vector<double>{1.0, INFINITY}), NumericError);
}

TEST(MatchingLossTest, MatchesHighPrecisionOracle) {
  for (const auto& c : kMatchingCases) {
    EXPECT_NEAR(MatchingLoss(c.scores), c.loss, 1e-10 * std::max(1.0, c.loss));
    EXPECT_NEAR(MatchingLoss(ad::Var(Matrix::RowVector(c.scores))).scalar(), c.loss,
                1e-10 * std::max(1.0, c.loss));
  }
}

TEST(MatchingLossTest, NonNegativeAndVanishesWhenGoldDominates) {
  const double at10 = MatchingLoss(std::vector<double>{10.0, 0.0, 0.5, -1.0});
  const double at20 = MatchingLoss(std::vector<double>{20.0, 0.0, 0.5, -1.0});
  EXPECT_GT(at10, at20);
  EXPECT_GT(at20, 0.0);
  EXPECT_LT(at20, 1e-8);
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(5);
    for (double& x : s) x = 3.0 * rng.Normal();
    EXPECT_GE(MatchingLoss(s), 0.0);
  }
}

TEST(MiningTest, TopPolicyExamples) {
  const std::vector<double> s = {0.1, 0.9, 0.8, 0.2};
  const auto two = MineNegatives(s, 0, {MiningKind::kTop, 2}, 0.03, 0);
  EXPECT_EQ(std::set<std::size_t>(two.begin(), two.end()), (std::set<std::size_t>{1, 2}));
  const auto all = MineNegatives(s, 2, {MiningKind::kTop, 3}, 0.03, 0);
  EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()), (std::set<std::size_t>{0, 1, 3}));
  // Ties go to the lower index.
  const auto tie = MineNegatives(std::vector<double>{0.0, 0.5, 0.5, 0.5}, 0,
                                 {MiningKind::kTop, 2}, 0.03, 0);
  EXPECT_EQ(tie, (std::vector<std::size_t>{1, 2}));
  // The gold index is never returned even when it scores highest.
  const auto g = MineNegatives(std::vector<double>{0.0, 5.0, 1.0}, 1, {MiningKind::kTop, 1}, 1, 0);
  EXPECT_EQ(g, std::vector<std::size_t>{2});
}

TEST(MiningTest, TopIgnoresRearrangingUnselectedScores) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(10);
    for (double& x : s) x = std::round(rng.Normal() * 2.0) / 2.0;
    const std::size_t gold = rng.UniformIndex(10);
    const auto picked = MineNegatives(s, gold, {MiningKind::kTop, 3}, 0.03, 0);
    const double cutoff = s[picked.back()];
    // Shuffle the values that sit strictly below the selection.
    std::vector<std::size_t> low;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j != gold && s[j] < cutoff) low.push_back(j);
    }
    std::vector<double> values;
    for (std::size_t j : low) values.push_back(s[j]);
    rng.Shuffle(std::span<double>(values));
    std::vector<double> t = s;
    for (std::size_t i = 0; i < low.size(); ++i) t[low[i]] = values[i];
    EXPECT_EQ(MineNegatives(t, gold, {MiningKind::kTop, 3}, 0.03, 0), picked);
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool chosen = std::find(picked.begin(), picked.end(), j) != picked.end();
      if (j != gold && !chosen) EXPECT_LE(s[j], cutoff);
    }
  }
}

TEST(MiningTest, MultinomialIsDeterministicDistinctAndExcludesGold) {
  const std::vector<double> s = {0.3, 0.1, 0.5, 0.2, 0.4, 0.0, 0.6, 0.05};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto a = MineNegatives(s, 6, {MiningKind::kMultinomial, 6}, 0.1, seed);
    EXPECT_EQ(a, MineNegatives(s, 6, {MiningKind::kMultinomial, 6}, 0.1, seed));
    EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 6u);
    EXPECT_EQ(std::count(a.begin(), a.end(), 6u), 0);
  }
  EXPECT_THROW(MineNegatives(s, 0, {MiningKind::kMultinomial, 8}, 0.1, 0), std::invalid_argument);
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(MineNegatives(std::vector<double>{1.0, -inf, -inf}, 0,
                             {MiningKind::kMultinomial, 1}, 0.1, 0),
               NumericError);
}

std::vector<double> SoftmaxWeights(const std::vector<double>& s, std::size_t gold, double tau) {
  std::vector<double> w(s.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j == gold) continue;
    w[j] = std::exp(s[j] / tau);
    total += w[j];
  }
  for (double& x : w) x /= total;
  return w;
}

TEST(MiningTest, MultinomialSingleDrawFollowsSoftmax) {
  const std::vector<double> s = {0.30, 0.10, 0.25, 0.20, 0.05};
  const std::size_t gold = 0;
  const double tau = 0.1;
  const auto p = SoftmaxWeights(s, gold, tau);
  constexpr int kDraws = 10000;
  std::vector<int> freq(s.size(), 0);
  for (int seed = 0; seed < kDraws; ++seed) {
    ++freq[MineNegatives(s, gold, {MiningKind::kMultinomial, 1}, tau, seed).at(0)];
  }
  EXPECT_EQ(freq[gold], 0);
  for (std::size_t j = 1; j < s.size(); ++j) {
    const double sigma = std::sqrt(kDraws * p[j] * (1 - p[j]));
    EXPECT_NEAR(freq[j], kDraws * p[j], 3 * sigma) << j;
  }
}

TEST(MiningTest, MultinomialPairInclusionMatchesSequentialOracle) {
  const std::vector<double> s = {0.4, 0.1, 0.3, 0.2, 0.0};
  const std::size_t gold = 4;
  const double tau = 0.2;
  const auto p = SoftmaxWeights(s, gold, tau);
  // Inclusion probability for two draws without replacement.
  std::vector<double> incl(s.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == gold) continue;
    incl[i] += p[i];
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j == gold || j == i) continue;
      incl[i] += p[j] * p[i] / (1.0 - p[j]);
    }
  }
  constexpr int kDraws = 10000;
  std::vector<int> freq(s.size(), 0);
  for (int seed = 0; seed < kDraws; ++seed) {
    for (std::size_t j : MineNegatives(s, gold, {MiningKind::kMultinomial, 2}, tau, seed)) {
      ++freq[j];
    }
  }
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j == gold) continue;
    const double sigma = std::sqrt(kDraws * incl[j] * (1 - incl[j]));
    EXPECT_NEAR(freq[j], kDraws * incl[j], 3 * sigma) << j;
  }
}

TEST(MatchHeadTest, ShapesAndDuplicates) {
  for (MatchFusion f : kAllMatchFusions) {
    const MatchHead head(f, 8, 3);
    const ad::Var u(RandomMatrix(1, 8, 1));
    Matrix locs = RandomMatrix(4, 8, 2);
    for (std::size_t c = 0; c < 8; ++c) locs(3, c) = locs(1, c);
    const Matrix s = head.Scores(u, ad::Var(locs)).value();
    EXPECT_EQ(s.rows(), 1u);
    EXPECT_EQ(s.cols(), 4u);
    EXPECT_EQ(s(0, 1), s(0, 3)) << Name(f);
    EXPECT_NE(s(0, 0), s(0, 1));
    EXPECT_THROW(head.Scores(ad::Var(Matrix(1, 7)), ad::Var(locs)), std::invalid_argument);
  }
}

TEST(MatchHeadTest, SumFusionSeesOnlyTheSum) {
  const MatchHead head(MatchFusion::kSum, 8, 3);
  const Matrix locs = RandomMatrix(3, 8, 5);
  const Matrix zero_user = head.Scores(ad::Var(Matrix(1, 8)), ad::Var(locs)).value();
  const Matrix u = RandomMatrix(1, 8, 6);
  Matrix shifted = locs;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) shifted(r, c) -= u(0, c);
  const Matrix moved = head.Scores(ad::Var(u), ad::Var(shifted)).value();
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(moved(0, j), zero_user(0, j), 1e-12);
}

TEST(MatchHeadTest, GradientsMatchFiniteDifferences) {
  for (MatchFusion f : kAllMatchFusions) {
    const MatchHead head(f, 8, 7);
    ad::Var u = ad::Var::Parameter(RandomMatrix(1, 8, 8));
    ad::Var locs = ad::Var::Parameter(RandomMatrix(5, 8, 9));
    auto loss = [&] { return MatchingLoss(head.Scores(u, locs)); };
    // Biases applied after fusion shift every pair score equally, which the
    // softmax ignores; a generic probe of the scores exercises them all.
    auto probe = [&] { return fewuser::testing::Probe(head.Scores(u, locs)); };
    std::string worst;
    EXPECT_LT(MaxGradientError(head.params(), probe, &worst), 1e-4) << Name(f) << " " << worst;
    EXPECT_LT(GradientError(u, loss), 1e-4) << Name(f);
    EXPECT_LT(GradientError(locs, loss), 1e-4) << Name(f);
  }
}

TEST(JointLossTest, WithoutHeadIsContrastiveOnly) {
  const ad::Var u(RandomMatrix(1, 8, 1));
  const ad::Var locs(RandomMatrix(10, 8, 2));
  const auto terms = JointLoss(u, locs, 3, 0.5, {MiningKind::kMultinomial, 6}, nullptr, 0);
  EXPECT_EQ(terms.match, 0.0);
  const Matrix scores = ad::MatMulNT(u, locs).value();
  EXPECT_NEAR(terms.total.scalar(), ContrastiveLoss(scores.flat(), 3, 0.5), 1e-12);
  const MatchHead head(MatchFusion::kConcat, 8, 0);
  const auto k0 = JointLoss(u, locs, 3, 0.5, {MiningKind::kMultinomial, 0}, &head, 0);
  EXPECT_EQ(k0.total.scalar(), terms.total.scalar());
}

TEST(JointLossTest, UniformCaseIsLogTenPlusLogSeven) {
  const Matrix row = RandomMatrix(1, 8, 3);
  Matrix locs(10, 8);
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 8; ++c) locs(r, c) = row(0, c);
  for (MatchFusion f : kAllMatchFusions) {
    const MatchHead head(f, 8, 1);
    const auto t =
        JointLoss(ad::Var(Matrix(1, 8)), ad::Var(locs), 0, 0.03, {MiningKind::kMultinomial, 6},
                  &head, 5);
    EXPECT_NEAR(t.contrast, std::log(10.0), 1e-9);
    EXPECT_NEAR(t.match, std::log(7.0), 1e-9);
    EXPECT_NEAR(t.total.scalar(), std::log(10.0) + std::log(7.0), 1e-9);
  }
}

TEST(JointLossTest, RandomInstanceEqualsSumOfParts) {
  const MatchHead head(MatchFusion::kConcat, 8, 2);
  const ad::Var u(RandomMatrix(1, 8, 4));
  const ad::Var locs(RandomMatrix(12, 8, 5));
  const MiningPolicy policy{MiningKind::kMultinomial, 6};
  const auto t = JointLoss(u, locs, 7, 0.3, policy, &head, 77);
  const Matrix scores = ad::MatMulNT(u, locs).value();
  const double contrast = ContrastiveLoss(scores.flat(), 7, 0.3);
  std::vector<std::size_t> rows = {7};
  for (std::size_t j : MineNegatives(scores.flat(), 7, policy, 0.3, 77)) rows.push_back(j);
  Matrix picked(rows.size(), 8);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < 8; ++c) picked(i, c) = locs.value()(rows[i], c);
  const double match = MatchingLoss(head.Scores(u, ad::Var(picked)).value().flat());
  EXPECT_NEAR(t.contrast, contrast, 1e-12);
  EXPECT_NEAR(t.match, match, 1e-12);
  EXPECT_NEAR(t.total.scalar(), contrast + match, 1e-12);
}

TEST(JointLossTest, SmallGradientStepDecreasesLoss) {
  const MatchHead head(MatchFusion::kConcat, 8, 2);
  ParamSet params;
  params.Extend(head.params());
  const ad::Var u = params.Add("user", RandomMatrix(1, 8, 6, 0.3));
  const ad::Var locs = params.Add("locs", RandomMatrix(10, 8, 7, 0.3));
  const MiningPolicy policy{MiningKind::kTop, 6};
  auto loss = [&] { return JointLoss(u, locs, 2, 0.03, policy, &head, 1).total; };
  for (double lr : {1e-3, 1e-4, 1e-5}) {
    const auto snapshot = params.Snapshot();
    params.ZeroGrad();
    const ad::Var before = loss();
    ad::Backward(before);
    for (const auto& p : params.items()) {
      ad::Var v = p.var;
      const Matrix g = v.grad();
      Matrix& x = v.mutable_value();
      for (std::size_t i = 0; i < x.size(); ++i) x.flat()[i] -= lr * g.flat()[i];
    }
    EXPECT_LT(loss().scalar(), before.scalar()) << "lr=" << lr;
    params.Restore(snapshot);
  }
}

TEST(ClassLossTest, IdentitiesAndOracle) {
  const ClassHead four(8, 4, 0);
  EXPECT_NEAR(ClassLoss(four, ad::Var(Matrix(1, 8)), 2).scalar(), std::log(4.0), 1e-12);
  const ClassHead one(8, 1, 0);
  EXPECT_EQ(ClassLoss(one, ad::Var(RandomMatrix(1, 8, 1)), 0).scalar(), 0.0);

  const ClassHead head(8, 6, 3);
  const ad::Var u(RandomMatrix(1, 8, 2));
  const Matrix logits = head.Logits(u).value();
  for (std::size_t g = 0; g < 6; ++g) {
    // Softmax cross-entropy at unit temperature, checked against the oracle-backed scalar path.
    EXPECT_NEAR(ClassLoss(head, u, g).scalar(), ContrastiveLoss(logits.flat(), g, 1.0), 1e-12);
  }
  const auto& c = kContrastiveCases[4];
  ClassHead fixed(1, c.scores.size(), 0);
  ad::Var w = fixed.params().items()[0].var;
  w.mutable_value() = Matrix::RowVector(c.scores);
  EXPECT_NEAR(ClassLoss(fixed, ad::Var(Matrix(1, 1, 1.0)), c.gold).scalar(), c.loss, 1e-12);
  EXPECT_THROW(ClassHead(8, 0, 0), std::invalid_argument);
}

TEST(ClassLossTest, GradientsMatchFiniteDifferences) {
  const ClassHead head(8, 5, 1);
  ad::Var u = ad::Var::Parameter(RandomMatrix(1, 8, 3));
  auto loss = [&] { return ClassLoss(head, u, 3); };
  EXPECT_LT(MaxGradientError(head.params(), loss), 1e-4);
  EXPECT_LT(GradientError(u, loss), 1e-4);
}

TEST(ObjectivesTest, EnumNamesRoundTrip) {
  for (MatchFusion f : kAllMatchFusions) EXPECT_EQ(ParseMatchFusion(Name(f)), f);
  for (MiningKind k : {MiningKind::kTop, MiningKind::kMultinomial}) {
    EXPECT_EQ(ParseMiningKind(Name(k)), k);
  }
  EXPECT_THROW(ParseMatchFusion("Product"), ConfigError);
}

}  // namespace
}  // namespace fewuser::objectives
