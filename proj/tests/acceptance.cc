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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "commands.h"
#include "fewuser/corpus.h"
#include "fewuser/encoder.h"
#include "fewuser/eval.h"
#include "fewuser/geo_prompt.h"
#include "fewuser/objectives.h"
#include "fewuser/synthetic.h"
#include "fewuser/trainer.h"
#include "fewuser/user_repr.h"
#include "test_util.h"

namespace fewuser {
namespace {

namespace fs = std::filesystem;
using testing::GradientError;
using testing::MaxGradientError;
using testing::Probe;
using testing::RandomMatrix;

struct HaversineCase {
  double lat1, lon1, lat2, lon2, wgs84_km, sphere_km;
};
const HaversineCase kHaversineCases[] = {
#include "oracles/haversine_cases.inc"
};

// Collects failures for one criterion; the first few become the detail text.
class Check {
 public:
  void Expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  void Note(const std::string& text) { info_ += (info_.empty() ? "" : ", ") + text; }
  bool ok() const { return failures_ == 0; }
  std::string detail() const {
    if (ok()) return info_;
    return std::to_string(failures_) + " failure(s): " + notes_;
  }

 private:
  int failures_ = 0;
  std::string notes_;
  std::string info_;
};

std::string Fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

int g_failed = 0;

void Run(int number, const std::string& title, double budget_s,
         const std::function<void(Check&)>& body) {
  Check check;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(check);
  } catch (const std::exception& e) {
    check.Expect(false, std::string("exception: ") + e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  check.Expect(secs <= budget_s, "took " + Fmt("%.1f", secs) + " s, budget " +
                                     Fmt("%.0f", budget_s) + " s");
  if (!check.ok()) ++g_failed;
  std::printf("%s criterion %d: %s [%.2f s]%s%s\n", check.ok() ? "PASS" : "FAIL", number,
              title.c_str(), secs, check.detail().empty() ? "" : " -- ",
              check.detail().c_str());
  std::fflush(stdout);
}

void LossIdentities(Check& c) {
  for (std::size_t k : {2u, 10u, 100u}) {
    const std::vector<double> s(k, 0.25);
    const double got = objectives::ContrastiveLoss(s, 0, 0.03);
    c.Expect(std::abs(got - std::log(static_cast<double>(k))) <= 1e-9,
             "contrastive K=" + std::to_string(k));
    const ad::Var v(Matrix(1, k, 0.25));
    c.Expect(std::abs(objectives::ContrastiveLoss(v, k - 1, 0.03).scalar() -
                      std::log(static_cast<double>(k))) <= 1e-9,
             "contrastive graph K=" + std::to_string(k));
  }
  const std::vector<double> seven(7, -0.4);
  c.Expect(std::abs(objectives::MatchingLoss(seven) - std::log(7.0)) <= 1e-9, "matching k=6");
  c.Expect(std::abs(objectives::MatchingLoss(ad::Var(Matrix(1, 7, 2.0))).scalar() -
                    std::log(7.0)) <= 1e-9,
           "matching graph k=6");
}

void GradientSuite(Check& c) {
  constexpr double kTol = 1e-4;
  double worst_seen = 0.0;
  auto expect = [&](double err, const std::string& what) {
    worst_seen = std::max(worst_seen, err);
    c.Expect(err < kTol, what + " rel err " + Fmt("%.2e", err));
  };

  for (auto init : {encoder::ToyInit::kAligned, encoder::ToyInit::kRandom}) {
    encoder::ToyEncoderConfig config;
    config.init = init;
    config.seed = 2;
    config.tokenizer.vocab_size = 48;
    const encoder::ToyEncoder enc(config);
    const auto seq = enc.tokenizer().Tokenize("a user in the city of rome");
    std::string worst;
    expect(MaxGradientError(enc.params(), [&] { return Probe(enc.Encode(seq)); }, &worst),
           "encoder " + worst);
  }

  const encoder::ToyEncoder enc([] {
    encoder::ToyEncoderConfig e;
    e.init = encoder::ToyInit::kRandom;
    e.seed = 4;
    return e;
  }());
  const corpus::LocationLabel label{"Rome", 41.9, 12.5};
  for (const geo_prompt::SoftPrompt& p :
       {geo_prompt::SoftPrompt::Random(4, 32, 0.5, 1),
        geo_prompt::SoftPrompt::FromHard(geo_prompt::HardPrompt("I live in [CLASS]."), enc)}) {
    expect(GradientError(p.vectors(),
                         [&] { return Probe(geo_prompt::EncodeLocationSoft(enc, p, label)); }),
           "soft prompt");
  }

  for (auto kind : user_repr::kAllFusionKinds) {
    const user_repr::FusionEncoder fusion(kind, 8, 5);
    ad::Var f = ad::Var::Parameter(RandomMatrix(4, 8, 6));
    auto loss = [&] { return Probe(fusion.Fuse(f)); };
    std::string worst;
    expect(GradientError(f, loss), "fusion input " + std::string(user_repr::Name(kind)));
    expect(MaxGradientError(fusion.params(), loss, &worst),
           "fusion " + std::string(user_repr::Name(kind)) + " " + worst);
  }

  for (auto fusion : {objectives::MatchFusion::kCrossAttention, objectives::MatchFusion::kSum,
                      objectives::MatchFusion::kConcat}) {
    // Gold plus six negatives; unit-scale inputs saturate the probe's tanh.
    const objectives::MatchHead head(fusion, 8, 7);
    ad::Var u = ad::Var::Parameter(RandomMatrix(1, 8, 8, 0.25));
    ad::Var locs = ad::Var::Parameter(RandomMatrix(7, 8, 9, 0.25));
    auto loss = [&] { return objectives::MatchingLoss(head.Scores(u, locs)); };
    auto probe = [&] { return Probe(head.Scores(u, locs)); };
    const std::string name(objectives::Name(fusion));
    std::string worst;
    expect(MaxGradientError(head.params(), probe, &worst), "match " + name + " " + worst);
    expect(GradientError(u, loss), "match " + name + " user");
    expect(GradientError(locs, loss), "match " + name + " locations");
  }
  c.Note("max rel err " + Fmt("%.1e", worst_seen));
}

void SemiSoftEquality(Check& c) {
  int compared = 0;
  for (auto init : {encoder::ToyInit::kAligned, encoder::ToyInit::kRandom}) {
    encoder::ToyEncoderConfig config;
    config.init = init;
    const encoder::ToyEncoder enc(config);
    for (std::string_view t : geo_prompt::ShippedTemplates()) {
      const geo_prompt::HardPrompt hard{std::string(t)};
      const auto semi = geo_prompt::SoftPrompt::FromHard(hard, enc);
      for (const corpus::LocationLabel& label :
           {corpus::LocationLabel{"Tokyo", 35.7, 139.7}, corpus::LocationLabel{"New York", {}, {}},
            corpus::LocationLabel{"St. John's", {}, {}}}) {
        const Matrix a = geo_prompt::EncodeLocationSoft(enc, semi, label).value();
        const Matrix b = geo_prompt::EncodeLocationHard(enc, hard, label).value();
        c.Expect(a == b, std::string(t) + " / " + label.name);
        ++compared;
      }
    }
  }
  c.Expect(std::size(geo_prompt::ShippedTemplates()) == 9, "expected 9 templates");
  c.Note(std::to_string(compared) + " bitwise comparisons");
}

void Mining(Check& c) {
  // Top: every score vector over a 3-level grid, every gold and k.
  constexpr std::size_t n = 5;
  int cases = 0;
  std::vector<double> s(n);
  for (int code = 0; code < 243; ++code) {
    for (std::size_t i = 0, x = code; i < n; ++i, x /= 3) s[i] = static_cast<double>(x % 3);
    for (std::size_t gold = 0; gold < n; ++gold) {
      std::vector<std::size_t> order;
      for (std::size_t i = 0; i < n; ++i) {
        if (i != gold) order.push_back(i);
      }
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
      for (std::size_t k = 1; k < n; ++k) {
        auto got = objectives::MineNegatives(s, gold, {objectives::MiningKind::kTop, k}, 0.03, 0);
        std::vector<std::size_t> want(order.begin(), order.begin() + k);
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        c.Expect(got == want, "top case " + std::to_string(code));
        ++cases;
      }
    }
  }

  // Multinomial: first draw distribution over 10,000 seeds.
  const std::vector<double> scores = {0.9, 0.2, 0.5, -0.1, 0.35, 0.0};
  const std::size_t gold = 2;
  const double tau = 0.25;
  double z = 0.0;
  std::vector<double> p(scores.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i != gold) z += p[i] = std::exp(scores[i] / tau);
  }
  for (double& x : p) x /= z;
  constexpr int kDraws = 10000;
  std::vector<int> freq(scores.size(), 0);
  for (int seed = 0; seed < kDraws; ++seed) {
    ++freq[objectives::MineNegatives(scores, gold, {objectives::MiningKind::kMultinomial, 1}, tau,
                                     seed)
               .at(0)];
  }
  double worst_z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == gold) {
      c.Expect(freq[i] == 0, "gold drawn");
      continue;
    }
    const double sigma = std::sqrt(kDraws * p[i] * (1 - p[i]));
    const double zscore = std::abs(freq[i] - kDraws * p[i]) / sigma;
    worst_z = std::max(worst_z, zscore);
    c.Expect(zscore <= 3.0, "index " + std::to_string(i) + " off by " + Fmt("%.2f", zscore) +
                                " sigma");
  }
  c.Note(std::to_string(cases) + " top cases");
  c.Note("max |z| " + Fmt("%.2f", worst_z));
}

// floor-train, floor-dev, remainder-test, then at least one in each part by
// taking from the largest (earliest on ties).
std::array<std::size_t, 3> Rounded(std::size_t n) {
  std::array<std::size_t, 3> p = {static_cast<std::size_t>(std::floor(0.7 * n + 1e-9)),
                                  static_cast<std::size_t>(std::floor(0.15 * n + 1e-9)), 0};
  p[2] = n - p[0] - p[1];
  for (std::size_t i = 0; i < 3; ++i) {
    while (p[i] == 0) {
      const std::size_t largest = std::max_element(p.begin(), p.end()) - p.begin();
      --p[largest];
      ++p[i];
    }
  }
  return p;
}

void SplitProtocol(Check& c) {
  // 40 classes with uneven sizes summing to 2,000; class 0 is too small for
  // the larger shot settings.
  synthetic::CorpusSpec spec;
  spec.classes = 40;
  spec.users_per_class = 50;
  spec.posts = 1;
  corpus::Dataset d = synthetic::Generate(spec);
  std::vector<std::size_t> sizes(40);
  for (std::size_t k = 0; k < 40; ++k) sizes[k] = 10 + 2 * k;
  sizes[0] = 5;
  sizes[39] += 2000 - (1960 - 5);
  std::size_t next = 0;
  for (std::size_t k = 0; k < 40; ++k) {
    for (std::size_t i = 0; i < sizes[k]; ++i) d.users[next++].label = corpus::MakeLabelId(k);
  }
  c.Expect(d.users.size() == 2000 && next == 2000, "dataset size");

  const std::vector<int> shots = {1, 2, 3, 4, 5, 6, 7, 8};
  const auto seeds = corpus::DefaultShotSeeds(17);
  const corpus::FewShotSplit base = corpus::MakeSplit(d, {}, 17);
  const corpus::FewShotSplit split = corpus::MakeShotSubsets(base, d, shots, seeds);

  const auto index = d.IndexByUserId();
  auto per_class = [&](const std::vector<std::string>& ids) {
    std::vector<std::size_t> n(40, 0);
    for (const auto& id : ids) ++n[corpus::Index(d.users[index.at(id)].label)];
    return n;
  };
  const auto train = per_class(split.train_ids), dev = per_class(split.dev_ids),
             dropped = per_class(split.dev_dropped_ids), test = per_class(split.test_ids);
  std::vector<std::size_t> dev_sizes;
  for (std::size_t k = 0; k < 40; ++k) {
    const auto want = Rounded(sizes[k]);
    c.Expect(train[k] == want[0] && dev[k] + dropped[k] == want[1] && test[k] == want[2],
             "class " + std::to_string(k) + " partition");
    dev_sizes.push_back(want[1]);
  }
  std::sort(dev_sizes.begin(), dev_sizes.end());
  const std::size_t cap = dev_sizes[(dev_sizes.size() - 1) / 2];
  c.Expect(split.dev_cap == cap, "dev cap");
  for (std::size_t k = 0; k < 40; ++k) {
    c.Expect(dev[k] == std::min(cap, Rounded(sizes[k])[1]),
             "class " + std::to_string(k) + " dev size");
  }

  const std::set<std::string> train_set(split.train_ids.begin(), split.train_ids.end());
  std::set<std::tuple<int, int, std::string, std::size_t>> want_short, got_short;
  for (const auto& r : split.shortfall_classes) {
    got_short.insert({r.shots, r.seed_index, r.label, r.available});
  }
  for (int s : shots) {
    for (int i = 0; i < 3; ++i) {
      const auto& subset = split.subset(s, i);
      for (const auto& id : subset) c.Expect(train_set.count(id) == 1, "subset outside train");
      const auto n = per_class(subset);
      for (std::size_t k = 0; k < 40; ++k) {
        const std::size_t want = std::min<std::size_t>(s, train[k]);
        c.Expect(n[k] == want, std::to_string(s) + "-shot class " + std::to_string(k));
        if (train[k] < static_cast<std::size_t>(s)) {
          want_short.insert({s, i, d.labels[k].name, train[k]});
        }
      }
    }
  }
  c.Expect(got_short == want_short, "shortfall records");
  c.Expect(!want_short.empty(), "expected a shortfall for the small class");

  const corpus::FewShotSplit again =
      corpus::MakeShotSubsets(corpus::MakeSplit(d, {}, 17), d, shots, seeds);
  c.Expect(again == split, "replay differs");
  c.Expect(corpus::SplitToJson(again).dump() == corpus::SplitToJson(split).dump(),
           "replayed JSON differs");
  c.Note(std::to_string(want_short.size()) + " shortfall records");
}

void Haversine(Check& c) {
  double worst = 0.0;
  for (const auto& h : kHaversineCases) {
    const double d = eval::HaversineKm(h.lat1, h.lon1, h.lat2, h.lon2);
    const double rel = std::abs(d - h.wgs84_km) / h.wgs84_km;
    worst = std::max(worst, rel);
    c.Expect(rel <= 0.005, "pair off by " + Fmt("%.4f", rel));
  }
  c.Expect(std::size(kHaversineCases) == 50, "50 pairs");
  c.Expect(eval::HaversineKm(-33.9, 151.2, -33.9, 151.2) == 0.0, "identity");
  c.Expect(eval::HaversineKm(0, 0, 0, 180) == std::numbers::pi * eval::kEarthRadiusKm,
           "antipode on the equator");
  c.Expect(eval::HaversineKm(90, 0, -90, 0) == std::numbers::pi * eval::kEarthRadiusKm,
           "pole to pole");
  c.Note("max rel dev " + Fmt("%.4f", worst));
}

void EndToEnd(Check& c) {
  const corpus::Dataset d = synthetic::Generate({});
  c.Expect(d.labels.size() == 20 && d.users.size() == 800, "corpus shape");
  const std::vector<int> shots = {1, 8};
  const corpus::FewShotSplit split = corpus::MakeShotSubsets(
      corpus::MakeSplit(d, {}, 0), d, shots, corpus::DefaultShotSeeds(0));

  trainer::TrainConfig train;
  train.lr = 1e-3;
  trainer::ModelConfig few;
  trainer::ModelConfig cls = few;
  cls.kind = trainer::ModelKind::kClassUser;
  cls.strategy.field_filter = user_repr::FieldFilter::kNoPostTime;

  const double eight = trainer::RunFewShot(d, split, 8, few, train).averaged.acc;
  const double one = trainer::RunFewShot(d, split, 1, few, train).averaged.acc;
  const double zero = trainer::RunZeroShot(d, split, few).acc;
  const double cls_one = trainer::RunFewShot(d, split, 1, cls, train).averaged.acc;
  const double chance = 1.0 / static_cast<double>(d.labels.size());
  c.Expect(eight >= 0.95, "8-shot " + Fmt("%.4f", eight));
  c.Expect(one >= 0.70, "1-shot " + Fmt("%.4f", one));
  c.Expect(zero >= 2 * chance, "zero-shot " + Fmt("%.4f", zero));
  c.Expect(one > cls_one, "ClassUser 1-shot " + Fmt("%.4f", cls_one));
  c.Note("8-shot " + Fmt("%.4f", eight));
  c.Note("1-shot " + Fmt("%.4f", one));
  c.Note("zero-shot " + Fmt("%.4f", zero));
  c.Note("ClassUser 1-shot " + Fmt("%.4f", cls_one));
}

void Cardinality(Check& c) {
  synthetic::CorpusSpec spec;
  spec.classes = 2;
  spec.users_per_class = 3;
  spec.profile_fields = 5;
  spec.posts = 6;
  using user_repr::IntegrationKind;
  std::set<std::size_t> no_in;
  for (bool metadata : {false, true}) {
    spec.post_metadata = metadata;
    const corpus::Dataset data = synthetic::Generate(spec);
    for (const auto& user : data.users) {
      c.Expect(user.profile.size() == 5, "profile fields");
      std::size_t per_field = 5;
      for (const auto& post : user.posts) {
        per_field += 1 + (post.source ? 1 : 0) + (post.hashtags ? 1 : 0) +
                     (post.created_at ? 1 : 0);
      }
      const std::map<IntegrationKind, std::size_t> want = {
          {IntegrationKind::kIn1, 1},         {IntegrationKind::kIn2, 2},
          {IntegrationKind::kInT, 7},         {IntegrationKind::kInUserPlus1, 6},
          {IntegrationKind::kInUserPlusT, 11}, {IntegrationKind::kNoIn, per_field}};
      for (const auto& [kind, n] : want) {
        const user_repr::IntegrationStrategy s{kind, user_repr::FieldFilter::kAll, 6};
        const auto got = user_repr::Integrate(user_repr::SelectFields(user, s), s).size();
        c.Expect(got == n, std::string(user_repr::Name(kind)) + " gave " + std::to_string(got));
      }
      no_in.insert(per_field);
    }
  }
  for (std::size_t n : no_in) c.Note("NoIn " + std::to_string(n));
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void Replay(Check& c) {
  const fs::path root = fs::temp_directory_path() / "fewuser_acceptance_replay";
  fs::remove_all(root);
  synthetic::CorpusSpec spec;
  spec.classes = 5;
  spec.users_per_class = 12;
  spec.posts = 3;
  spec.post_metadata = true;
  cli::Synth(spec, root / "data");
  const run_config::RunConfig config = run_config::FromJson(
      {{"dataset", {{"path", (root / "data" / "dataset.jsonl").string()}}},
       {"representation", {{"T", 3}}},
       {"train", {{"epochs", 4}}},
       {"eval", {{"shots", {0, 1, 2}}}}});
  cli::Train(config, root / "first");
  const auto differing = cli::Replay(root / "first" / "manifest.json", root / "second");
  for (const auto& rel : differing) c.Expect(false, rel + " differs");

  int metric_files = 0;
  for (const auto& entry : fs::directory_iterator(root / "first")) {
    const std::string name = entry.path().filename().string();
    const bool metric = name.rfind("report", 0) == 0 || name.rfind("curve-", 0) == 0 ||
                        name == "acc_vs_shots.csv";
    if (!metric) continue;
    ++metric_files;
    c.Expect(Slurp(entry.path()) == Slurp(root / "second" / name), name + " bytes differ");
  }
  c.Expect(metric_files >= 9, "too few metric files");
  c.Note(std::to_string(metric_files) + " metric files identical");
  fs::remove_all(root);
}

}  // namespace
}  // namespace fewuser

int main() {
  using namespace fewuser;
  Run(1, "loss identities ln K and ln(k+1)", 1, LossIdentities);
  Run(2, "finite-difference gradient suite", 120, GradientSuite);
  Run(3, "semi-soft equals hard at init for all templates", 5, SemiSoftEquality);
  Run(4, "top mining exact, multinomial within 3 sigma", 30, Mining);
  Run(5, "split protocol on 2,000 users", 10, SplitProtocol);
  Run(6, "haversine against oracle, identity and antipode", 1, Haversine);
  Run(7, "synthetic 20x40 end-to-end accuracy", 600, EndToEnd);
  Run(8, "integration cardinality with T=6 and 5 fields", 1, Cardinality);
  Run(9, "manifest replay reproduces metric files", 300, Replay);
  std::printf("%d of 9 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
