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
#include <set>
#include <sstream>
#include <string>

#include "fewuser/corpus.h"
#include "fewuser/errors.h"
#include "fewuser/random.h"
#include "fewuser/synthetic.h"
#include "json.hpp"

namespace fewuser::corpus {
namespace {

std::string Serialize(const Dataset& d) {
  std::ostringstream out;
  WriteDataset(d, out);
  return out.str();
}

Dataset Parse(const std::string& text) {
  std::istringstream in(text);
  return ParseDataset(in);
}

// Reverses key order in record, post and label objects. Profile and extra
// maps are ordered data and stay as they are.
nlohmann::ordered_json Reversed(const nlohmann::ordered_json& j) {
  if (j.is_object()) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    std::reverse(keys.begin(), keys.end());
    for (const auto& k : keys) {
      out[k] = (k == "profile" || k == "extra") ? j[k] : Reversed(j[k]);
    }
    return out;
  }
  if (j.is_array()) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& v : j) out.push_back(Reversed(v));
    return out;
  }
  return j;
}

Dataset CountsDataset(const std::map<std::string, int>& counts) {
  Dataset d;
  int next = 0;
  for (const auto& [name, n] : counts) {
    d.labels.push_back({name, std::nullopt, std::nullopt});
    for (int i = 0; i < n; ++i) {
      UserRecord u;
      u.user_id = name + std::to_string(next++);
      u.label = MakeLabelId(d.labels.size() - 1);
      u.posts.push_back({"hello " + name, {}, {}, {}, {}});
      d.users.push_back(u);
    }
  }
  return d;
}

TEST(CorpusTest, EmptyInputGivesEmptyDataset) {
  const Dataset d = Parse("");
  EXPECT_TRUE(d.users.empty());
  EXPECT_TRUE(d.labels.empty());
}

TEST(CorpusTest, SingleRecordRoundTrips) {
  const std::string line =
      R"({"user_id":"u1","profile":{"name":"bo"},"posts":[{"text":"hi"}],"label":{"name":"Paris","lat":48.8566,"lon":2.3522}})"
      "\n";
  const Dataset d = Parse(line);
  ASSERT_EQ(d.users.size(), 1u);
  ASSERT_EQ(d.labels.size(), 1u);
  EXPECT_EQ(d.labels[0].name, "Paris");
  EXPECT_EQ(Serialize(d), line);
}

TEST(CorpusTest, SyntheticFileRoundTripsToCanonicalForm) {
  synthetic::CorpusSpec spec;
  spec.classes = 10;
  spec.users_per_class = 10;
  spec.post_metadata = true;
  const Dataset d = synthetic::Generate(spec);
  ASSERT_EQ(d.users.size(), 100u);
  const std::string canonical = Serialize(d);
  EXPECT_EQ(Serialize(Parse(canonical)), canonical);
  EXPECT_EQ(Parse(canonical), d);

  // Key order and reversed post order are both normalised away.
  std::istringstream lines(canonical);
  std::string messy, text;
  while (std::getline(lines, text)) {
    auto j = nlohmann::ordered_json::parse(text);
    auto& posts = j["posts"];
    std::reverse(posts.begin(), posts.end());
    messy += "  " + Reversed(j).dump() + " \n\n";
  }
  EXPECT_EQ(Serialize(Parse(messy)), canonical);
}

TEST(CorpusTest, PostsWithoutTimestampsKeepFileOrder) {
  const Dataset d = Parse(
      R"({"user_id":"u","posts":[{"text":"b"},{"text":"a"}],"label":{"name":"X"}})");
  EXPECT_EQ(d.users[0].posts[0].text, "b");
  const Dataset t = Parse(
      R"({"user_id":"u","posts":[{"text":"old","created_at":"2016-01-01T00:00:00Z"},)"
      R"({"text":"new","created_at":"2016-02-01T00:00:00Z"}],"label":{"name":"X"}})");
  EXPECT_EQ(t.users[0].posts[0].text, "new");
}

TEST(CorpusTest, ParseErrorsNameTheLineOrUser) {
  auto message = [](const std::string& text) {
    try {
      Parse(text);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const std::string good = R"({"user_id":"a","label":{"name":"X"}})";
  EXPECT_NE(message(good + "\n{not json").find("line 2"), std::string::npos);
  EXPECT_NE(message(R"({"user_id":"a","label":{"name":"X"},"bogus":1})").find("bogus"),
            std::string::npos);
  EXPECT_NE(message(R"({"user_id":"zed","label":{"lat":1,"lon":2}})").find("zed"),
            std::string::npos);
  EXPECT_NE(message(R"({"user_id":"zed","label":{"name":"X","lat":1}})").find("zed"),
            std::string::npos);
  EXPECT_NE(message(good + "\n" + good).find("duplicate"), std::string::npos);
  EXPECT_NE(message(R"({"user_id":"a","posts":[{"source":"x"}],"label":{"name":"X"}})")
                .find("text"),
            std::string::npos);
}

TEST(CorpusTest, LabelsAreDeduplicatedByName) {
  const Dataset d = Parse(R"({"user_id":"a","label":{"name":"X"}})"
                          "\n"
                          R"({"user_id":"b","label":{"name":"X"}})");
  EXPECT_EQ(d.labels.size(), 1u);
  EXPECT_EQ(d.users[1].label, MakeLabelId(0));
}

TEST(CorpusTest, FilterKeepsOnlyLargeClasses) {
  const Dataset d = CountsDataset({{"a", 5}, {"b", 2}});
  EXPECT_EQ(FilterMinorityClasses(d, 1), d);
  const Dataset f = FilterMinorityClasses(d, 3);
  ASSERT_EQ(f.labels.size(), 1u);
  EXPECT_EQ(f.labels[0].name, "a");
  EXPECT_EQ(f.users.size(), 5u);
  EXPECT_THROW(FilterMinorityClasses(d, 6), DataError);
  EXPECT_THROW(FilterMinorityClasses(d, 0), ConfigError);
}

TEST(CorpusTest, FilterMatchesBruteForceCount) {
  fewuser::Rng rng(5);
  std::map<std::string, int> counts;
  for (int c = 0; c < 30; ++c) counts["c" + std::to_string(c)] = 1 + rng.UniformIndex(9);
  const Dataset d = CountsDataset(counts);
  const Dataset f = FilterMinorityClasses(d, 4);

  std::set<std::string> want_labels, want_users;
  for (const auto& u : d.users) {
    const std::string& name = d.labels[Index(u.label)].name;
    int n = 0;
    for (const auto& v : d.users) n += d.labels[Index(v.label)].name == name;
    if (n >= 4) {
      want_labels.insert(name);
      want_users.insert(u.user_id);
    }
  }
  std::set<std::string> got_labels, got_users;
  for (const auto& l : f.labels) got_labels.insert(l.name);
  for (const auto& u : f.users) {
    got_users.insert(u.user_id);
    const auto& original = d.users[d.IndexByUserId().at(u.user_id)];
    EXPECT_EQ(f.labels[Index(u.label)].name, d.labels[Index(original.label)].name);
  }
  EXPECT_EQ(got_labels, want_labels);
  EXPECT_EQ(got_users, want_users);
  EXPECT_EQ(FilterMinorityClasses(f, 4), f);
}

TEST(CorpusTest, RoundingRule) {
  const SplitRatios r;
  const PartitionCounts ten = RoundPartition(10, r);
  EXPECT_EQ(ten.train, 7u);
  EXPECT_EQ(ten.dev, 1u);
  EXPECT_EQ(ten.test, 2u);
  const PartitionCounts three = RoundPartition(3, r);
  EXPECT_EQ(three.train, 1u);
  EXPECT_EQ(three.dev, 1u);
  EXPECT_EQ(three.test, 1u);
  EXPECT_THROW(RoundPartition(2, r), DataError);
  for (std::size_t n = 3; n <= 200; ++n) {
    const PartitionCounts c = RoundPartition(n, r);
    EXPECT_EQ(c.train + c.dev + c.test, n);
    EXPECT_GE(c.train, 1u);
    EXPECT_GE(c.dev, 1u);
    EXPECT_GE(c.test, 1u);
    if (n >= 7) {
      EXPECT_EQ(c.train, static_cast<std::size_t>(std::floor(0.7 * n + 1e-9))) << n;
    }
  }
}

TEST(CorpusTest, SplitNamesTooSmallClass) {
  const Dataset d = CountsDataset({{"big", 10}, {"tiny", 2}});
  try {
    MakeSplit(d, {}, 0);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny"), std::string::npos);
  }
}

TEST(CorpusTest, SplitIsAPartitionAndDeterministic) {
  synthetic::CorpusSpec spec;
  spec.classes = 25;
  spec.users_per_class = 23;
  const Dataset d = synthetic::Generate(spec);
  const FewShotSplit a = MakeSplit(d, {}, 42);
  EXPECT_EQ(a, MakeSplit(d, {}, 42));
  EXPECT_NE(a.train_ids, MakeSplit(d, {}, 43).train_ids);

  std::multiset<std::string> all;
  for (const auto* part : {&a.train_ids, &a.dev_ids, &a.test_ids, &a.dev_dropped_ids}) {
    all.insert(part->begin(), part->end());
  }
  std::multiset<std::string> users;
  for (const auto& u : d.users) users.insert(u.user_id);
  EXPECT_EQ(all, users);
  EXPECT_EQ(a.test_ids.size(), 25u * RoundPartition(23, {}).test);
  EXPECT_EQ(a.dev_cap, RoundPartition(23, {}).dev);
}

TEST(CorpusTest, DevCapDownsamplesOnlyDev) {
  const Dataset d = CountsDataset({{"a", 40}, {"b", 10}, {"c", 20}});
  const FewShotSplit s = MakeSplit(d, {}, 1);
  // Dev sizes are 6, 1 and 3; the median is 3.
  EXPECT_EQ(s.dev_cap, 3u);
  EXPECT_EQ(s.dev_ids.size(), 3u + 1u + 3u);
  EXPECT_EQ(s.dev_dropped_ids.size(), 3u);
  EXPECT_EQ(s.test_ids.size(), RoundPartition(40, {}).test + RoundPartition(10, {}).test +
                                   RoundPartition(20, {}).test);
  const FewShotSplit capped = MakeSplit(d, {}, 1, 1);
  EXPECT_EQ(capped.dev_ids.size(), 3u);
  EXPECT_EQ(capped.test_ids, s.test_ids);
  EXPECT_EQ(capped.train_ids, s.train_ids);
}

TEST(CorpusTest, ShotSubsetsHaveExactlySPerClass) {
  synthetic::CorpusSpec spec;
  spec.classes = 12;
  spec.users_per_class = 15;
  const Dataset d = synthetic::Generate(spec);
  const std::vector<int> shots = {1, 2, 4, 8};
  const FewShotSplit base = MakeSplit(d, {}, 3);
  const FewShotSplit s = MakeShotSubsets(base, d, shots, DefaultShotSeeds(3));
  EXPECT_EQ(s, MakeShotSubsets(base, d, shots, DefaultShotSeeds(3)));
  EXPECT_TRUE(s.shortfall_classes.empty());
  const std::set<std::string> train(s.train_ids.begin(), s.train_ids.end());
  const auto index = d.IndexByUserId();
  for (int shot : shots) {
    for (int i = 0; i < 3; ++i) {
      std::map<std::size_t, int> per_class;
      const auto& subset = s.subset(shot, i);
      EXPECT_EQ(std::set<std::string>(subset.begin(), subset.end()).size(), subset.size());
      for (const auto& id : subset) {
        EXPECT_TRUE(train.count(id)) << id;
        ++per_class[Index(d.users[index.at(id)].label)];
      }
      EXPECT_EQ(per_class.size(), 12u);
      for (const auto& [c, n] : per_class) EXPECT_EQ(n, shot);
    }
  }
  EXPECT_THROW(s.subset(3, 0), DataError);
  const std::vector<int> bad = {9};
  EXPECT_THROW(MakeShotSubsets(base, d, bad, DefaultShotSeeds(3)), ConfigError);
  EXPECT_THROW(MakeShotSubsets(base, d, shots, {1, 1, 2}), ConfigError);
}

TEST(CorpusTest, ShortfallTakesAllAndIsRecorded) {
  // 8 users per class leave 5 for training.
  const Dataset d = CountsDataset({{"a", 8}, {"b", 30}});
  const FewShotSplit base = MakeSplit(d, {}, 0);
  const std::vector<int> shots = {8};
  const FewShotSplit s = MakeShotSubsets(base, d, shots, DefaultShotSeeds(0));
  ASSERT_EQ(s.shortfall_classes.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(s.shortfall_classes[i], (ShortfallRecord{8, i, "a", 5}));
    EXPECT_EQ(s.subset(8, i).size(), 5u + 8u);
  }
}

TEST(CorpusTest, OneShotDrawIsUniform) {
  const Dataset d = CountsDataset({{"x", 3}});
  FewShotSplit split;
  for (const auto& u : d.users) split.train_ids.push_back(u.user_id);
  const std::vector<int> shots = {1};
  std::map<std::string, int> freq;
  constexpr int kDraws = 10000;
  for (int seed = 0; seed < kDraws; ++seed) {
    const std::array<std::uint64_t, 3> seeds = {std::uint64_t(3 * seed + 1),
                                                std::uint64_t(3 * seed + 2),
                                                std::uint64_t(3 * seed + 3)};
    const auto s = MakeShotSubsets(split, d, shots, seeds);
    ++freq[s.subset(1, 0).at(0)];
  }
  const double sigma = std::sqrt(kDraws * (1.0 / 3) * (2.0 / 3));
  ASSERT_EQ(freq.size(), 3u);
  for (const auto& [id, n] : freq) EXPECT_NEAR(n, kDraws / 3.0, 3 * sigma) << id;
}

TEST(CorpusTest, SplitManifestRoundTrips) {
  const Dataset d = CountsDataset({{"a", 12}, {"b", 9}});
  const std::vector<int> shots = {1, 8};
  const FewShotSplit s = MakeShotSubsets(MakeSplit(d, {}, 7), d, shots, DefaultShotSeeds(7));
  const auto j = SplitToJson(s);
  for (const char* key : {"global_seed", "ratios", "dev_cap", "train_ids", "dev_ids",
                          "test_ids", "shot_subsets", "shortfall_classes"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(SplitFromJson(nlohmann::ordered_json::parse(j.dump())), s);
  EXPECT_THROW(SplitFromJson(nlohmann::ordered_json::parse(R"({"ratios":[1]})")), DataError);
}

TEST(CorpusTest, ValidateRejectsBrokenInvariants) {
  Dataset d = CountsDataset({{"a", 2}});
  EXPECT_NO_THROW(Validate(d));
  Dataset dup = d;
  dup.users[1].user_id = dup.users[0].user_id;
  EXPECT_THROW(Validate(dup), DataError);
  Dataset half = d;
  half.labels[0].latitude = 10.0;
  EXPECT_THROW(Validate(half), DataError);
  Dataset dangling = d;
  dangling.users[0].label = MakeLabelId(4);
  EXPECT_THROW(Validate(dangling), DataError);
  EXPECT_TRUE(IsIsoUtcTimestamp("2016-05-31T23:59:59Z"));
  EXPECT_FALSE(IsIsoUtcTimestamp("2016-05-31 23:59:59"));
}

}  // namespace
}  // namespace fewuser::corpus
