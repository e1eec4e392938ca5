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

#ifndef FEWUSER_CORPUS_H_
#define FEWUSER_CORPUS_H_

// Dataset model, JSON-lines ingestion, minority-class filtering and the
// per-class train/dev/test + s-shot split protocol.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

namespace fewuser::corpus {

// Index of a LocationLabel within Dataset::labels.
enum class LabelId : std::uint32_t {};

constexpr std::size_t Index(LabelId id) { return static_cast<std::size_t>(id); }
constexpr LabelId MakeLabelId(std::size_t i) {
  return static_cast<LabelId>(static_cast<std::uint32_t>(i));
}

using FieldList = std::vector<std::pair<std::string, std::string>>;

struct PostRecord {
  std::string text;
  std::optional<std::string> source;
  std::optional<std::vector<std::string>> hashtags;
  std::optional<std::string> created_at;  // ISO-8601 UTC, e.g. 2016-05-01T12:00:00Z
  std::optional<FieldList> extra;

  friend bool operator==(const PostRecord&, const PostRecord&) = default;
};

struct UserRecord {
  std::string user_id;
  FieldList profile;
  std::vector<PostRecord> posts;  // most recent first
  LabelId label{};

  friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

struct LocationLabel {
  std::string name;
  std::optional<double> latitude;
  std::optional<double> longitude;

  bool has_coordinates() const { return latitude.has_value(); }
  friend bool operator==(const LocationLabel&, const LocationLabel&) = default;
};

struct Dataset {
  std::vector<UserRecord> users;
  std::vector<LocationLabel> labels;

  const LocationLabel& label(LabelId id) const { return labels.at(Index(id)); }
  bool all_labels_have_coordinates() const;
  std::unordered_map<std::string, std::size_t> IndexByUserId() const;
  // Users per label, indexed by LabelId.
  std::vector<std::size_t> ClassCounts() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Checks every UserRecord/LocationLabel invariant; throws DataError.
void Validate(const Dataset& dataset);

// True for YYYY-MM-DDTHH:MM:SS[.fraction]Z.
bool IsIsoUtcTimestamp(const std::string& ts);

// One user per line. Labels are deduplicated by name in first-seen order;
// posts are sorted newest-first when every post carries a timestamp.
Dataset ParseDataset(std::istream& in);
Dataset LoadDataset(const std::filesystem::path& path);
void WriteDataset(const Dataset& dataset, std::ostream& out);
void SaveDataset(const Dataset& dataset, const std::filesystem::path& path);

// Drops classes with fewer than min_count users and their users; surviving
// labels keep their relative order. Throws DataError if nothing survives.
Dataset FilterMinorityClasses(const Dataset& dataset, std::size_t min_count);

struct SplitRatios {
  double train = 0.7;
  double dev = 0.15;
  double test = 0.15;
};

struct PartitionCounts {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
};

// floor for train and dev, remainder to test, then every partition is
// topped up to one by taking from the largest (train wins ties, so test
// stays largest). Requires n >= 3.
PartitionCounts RoundPartition(std::size_t n, const SplitRatios& ratios);

struct ShortfallRecord {
  int shots = 0;
  int seed_index = 0;
  std::string label;
  std::size_t available = 0;

  friend bool operator==(const ShortfallRecord&, const ShortfallRecord&) = default;
};

struct FewShotSplit {
  std::uint64_t global_seed = 0;
  SplitRatios ratios;
  std::size_t dev_cap = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> dev_ids;
  std::vector<std::string> test_ids;
  // Dev users removed by the per-class cap; they belong to no partition.
  std::vector<std::string> dev_dropped_ids;
  std::array<std::uint64_t, 3> shot_seeds{};
  // (shots, seed_index) -> user ids.
  std::map<std::pair<int, int>, std::vector<std::string>> shot_subsets;
  std::vector<ShortfallRecord> shortfall_classes;

  const std::vector<std::string>& subset(int shots, int seed_index) const;
  friend bool operator==(const FewShotSplit& a, const FewShotSplit& b);
};

FewShotSplit MakeSplit(const Dataset& dataset, const SplitRatios& ratios,
                       std::uint64_t global_seed,
                       std::optional<std::size_t> dev_cap = std::nullopt);

FewShotSplit MakeShotSubsets(const FewShotSplit& split, const Dataset& dataset,
                             std::span<const int> shots,
                             const std::array<std::uint64_t, 3>& seeds);

// Seeds used when none are given: derived from the split's global seed.
std::array<std::uint64_t, 3> DefaultShotSeeds(std::uint64_t global_seed);

nlohmann::ordered_json SplitToJson(const FewShotSplit& split);
FewShotSplit SplitFromJson(const nlohmann::ordered_json& j);

}  // namespace fewuser::corpus

#endif  // FEWUSER_CORPUS_H_
