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

#include "fewuser/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "fewuser/errors.h"
#include "fewuser/random.h"

namespace fewuser::corpus {

using nlohmann::ordered_json;

bool Dataset::all_labels_have_coordinates() const {
  if (labels.empty()) return false;
  return std::all_of(labels.begin(), labels.end(),
                     [](const LocationLabel& l) { return l.has_coordinates(); });
}

std::unordered_map<std::string, std::size_t> Dataset::IndexByUserId() const {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) index.emplace(users[i].user_id, i);
  return index;
}

std::vector<std::size_t> Dataset::ClassCounts() const {
  std::vector<std::size_t> counts(labels.size(), 0);
  for (const auto& u : users) ++counts.at(Index(u.label));
  return counts;
}

bool IsIsoUtcTimestamp(const std::string& ts) {
  // YYYY-MM-DDTHH:MM:SS
  static constexpr char kShape[] = "dddd-dd-ddTdd:dd:dd";
  constexpr std::size_t kLen = sizeof(kShape) - 1;
  if (ts.size() < kLen + 1 || ts.back() != 'Z') return false;
  for (std::size_t i = 0; i < kLen; ++i) {
    const char want = kShape[i];
    const char got = ts[i];
    if (want == 'd' ? !std::isdigit(static_cast<unsigned char>(got)) : got != want) {
      return false;
    }
  }
  const std::string tail = ts.substr(kLen, ts.size() - kLen - 1);
  if (tail.empty()) return true;
  if (tail[0] != '.' || tail.size() < 2) return false;
  return std::all_of(tail.begin() + 1, tail.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

namespace {

// Sort key ordering timestamps chronologically regardless of fraction width.
std::string TimestampKey(const std::string& ts) {
  std::string key = ts.substr(0, 19);
  std::string fraction;
  if (ts.size() > 20) fraction = ts.substr(20, ts.size() - 21);
  fraction.resize(12, '0');
  return key + fraction;
}

void SortPostsNewestFirst(std::vector<PostRecord>& posts) {
  const bool all_timed = std::all_of(posts.begin(), posts.end(), [](const PostRecord& p) {
    return p.created_at.has_value();
  });
  if (!all_timed) return;
  std::stable_sort(posts.begin(), posts.end(),
                   [](const PostRecord& a, const PostRecord& b) {
                     return TimestampKey(*a.created_at) > TimestampKey(*b.created_at);
                   });
}

[[noreturn]] void LineError(std::size_t line, const std::string& what) {
  throw DataError("dataset line " + std::to_string(line) + ": " + what);
}

void RejectUnknownKeys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                       std::size_t line, const char* where) {
  for (const auto& [key, _] : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    if (!known) LineError(line, std::string("unknown key '") + key + "' in " + where);
  }
}

const std::string& RequireString(const ordered_json& v, std::size_t line, const std::string& what) {
  if (!v.is_string()) LineError(line, what + " must be a string");
  return v.get_ref<const std::string&>();
}

FieldList ParseStringMap(const ordered_json& v, std::size_t line, const std::string& what) {
  if (!v.is_object()) LineError(line, what + " must be an object");
  FieldList out;
  for (const auto& [key, value] : v.items()) {
    if (key.empty()) LineError(line, what + " has an empty key");
    out.emplace_back(key, RequireString(value, line, what + "." + key));
  }
  return out;
}

PostRecord ParsePost(const ordered_json& v, std::size_t line) {
  if (!v.is_object()) LineError(line, "post must be an object");
  RejectUnknownKeys(v, {"text", "source", "hashtags", "created_at", "extra"}, line, "post");
  PostRecord post;
  if (!v.contains("text")) LineError(line, "post is missing 'text'");
  post.text = RequireString(v["text"], line, "post.text");
  if (v.contains("source")) post.source = RequireString(v["source"], line, "post.source");
  if (v.contains("hashtags")) {
    const auto& tags = v["hashtags"];
    if (!tags.is_array()) LineError(line, "post.hashtags must be an array");
    std::vector<std::string> out;
    for (const auto& t : tags) out.push_back(RequireString(t, line, "post.hashtags[]"));
    post.hashtags = std::move(out);
  }
  if (v.contains("created_at")) {
    post.created_at = RequireString(v["created_at"], line, "post.created_at");
    if (!IsIsoUtcTimestamp(*post.created_at)) {
      LineError(line, "post.created_at is not an ISO-8601 UTC timestamp: " + *post.created_at);
    }
  }
  if (v.contains("extra")) post.extra = ParseStringMap(v["extra"], line, "post.extra");
  return post;
}

LocationLabel ParseLabel(const ordered_json& v, std::size_t line, const std::string& user_id) {
  if (!v.is_object()) {
    throw DataError("dataset line " + std::to_string(line) + ": user '" + user_id +
                    "' has no valid label object");
  }
  RejectUnknownKeys(v, {"name", "lat", "lon"}, line, "label");
  LocationLabel label;
  if (!v.contains("name") || !v["name"].is_string() ||
      v["name"].get_ref<const std::string&>().empty()) {
    throw DataError("dataset line " + std::to_string(line) + ": user '" + user_id +
                    "' references a label without a name");
  }
  label.name = v["name"].get<std::string>();
  const bool has_lat = v.contains("lat");
  const bool has_lon = v.contains("lon");
  if (has_lat != has_lon) {
    throw DataError("dataset line " + std::to_string(line) + ": user '" + user_id +
                    "' label needs both lat and lon or neither");
  }
  if (has_lat) {
    if (!v["lat"].is_number() || !v["lon"].is_number()) {
      LineError(line, "label lat/lon must be numbers");
    }
    label.latitude = v["lat"].get<double>();
    label.longitude = v["lon"].get<double>();
  }
  return label;
}

ordered_json StringMapToJson(const FieldList& fields) {
  ordered_json obj = ordered_json::object();
  for (const auto& [k, v] : fields) obj[k] = v;
  return obj;
}

ordered_json UserToJson(const UserRecord& user, const LocationLabel& label) {
  ordered_json j;
  j["user_id"] = user.user_id;
  j["profile"] = StringMapToJson(user.profile);
  ordered_json posts = ordered_json::array();
  for (const auto& p : user.posts) {
    ordered_json pj;
    pj["text"] = p.text;
    if (p.source) pj["source"] = *p.source;
    if (p.hashtags) pj["hashtags"] = *p.hashtags;
    if (p.created_at) pj["created_at"] = *p.created_at;
    if (p.extra) pj["extra"] = StringMapToJson(*p.extra);
    posts.push_back(std::move(pj));
  }
  j["posts"] = std::move(posts);
  ordered_json lj;
  lj["name"] = label.name;
  if (label.has_coordinates()) {
    lj["lat"] = *label.latitude;
    lj["lon"] = *label.longitude;
  }
  j["label"] = std::move(lj);
  return j;
}

}  // namespace

void Validate(const Dataset& dataset) {
  std::unordered_set<std::string> label_names;
  for (const auto& l : dataset.labels) {
    if (l.name.empty()) throw DataError("label with empty name");
    if (!label_names.insert(l.name).second) throw DataError("duplicate label " + l.name);
    if (l.latitude.has_value() != l.longitude.has_value()) {
      throw DataError("label " + l.name + " has only one coordinate");
    }
    if (l.latitude && (*l.latitude < -90.0 || *l.latitude > 90.0 || *l.longitude < -180.0 ||
                       *l.longitude > 180.0)) {
      throw DataError("label " + l.name + " has out-of-range coordinates");
    }
  }
  std::unordered_set<std::string> ids;
  for (const auto& u : dataset.users) {
    if (!ids.insert(u.user_id).second) throw DataError("duplicate user_id " + u.user_id);
    if (Index(u.label) >= dataset.labels.size()) {
      throw DataError("user " + u.user_id + " references a missing label");
    }
    for (const auto& p : u.posts) {
      if (p.extra) {
        std::set<std::string> keys;
        for (const auto& [k, _] : *p.extra) {
          if (k.empty() || !keys.insert(k).second) {
            throw DataError("user " + u.user_id + " has an empty or duplicate extra key");
          }
        }
      }
    }
  }
}

Dataset ParseDataset(std::istream& in) {
  Dataset dataset;
  std::unordered_map<std::string, std::size_t> label_by_name;
  std::unordered_set<std::string> seen_ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      LineError(line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) LineError(line, "record must be a JSON object");
    RejectUnknownKeys(j, {"user_id", "profile", "posts", "label"}, line, "user record");
    if (!j.contains("user_id")) LineError(line, "missing 'user_id'");
    UserRecord user;
    user.user_id = RequireString(j["user_id"], line, "user_id");
    if (user.user_id.empty()) LineError(line, "empty user_id");
    if (!seen_ids.insert(user.user_id).second) {
      LineError(line, "duplicate user_id '" + user.user_id + "'");
    }
    if (j.contains("profile")) user.profile = ParseStringMap(j["profile"], line, "profile");
    if (j.contains("posts")) {
      if (!j["posts"].is_array()) LineError(line, "posts must be an array");
      for (const auto& p : j["posts"]) user.posts.push_back(ParsePost(p, line));
    }
    SortPostsNewestFirst(user.posts);
    if (!j.contains("label")) {
      throw DataError("dataset line " + std::to_string(line) + ": user '" + user.user_id +
                      "' has no label");
    }
    LocationLabel label = ParseLabel(j["label"], line, user.user_id);
    auto [it, inserted] = label_by_name.emplace(label.name, dataset.labels.size());
    if (inserted) {
      dataset.labels.push_back(label);
    } else if (!(dataset.labels[it->second] == label)) {
      throw DataError("dataset line " + std::to_string(line) + ": user '" + user.user_id +
                      "' label '" + label.name + "' conflicts with earlier coordinates");
    }
    user.label = MakeLabelId(it->second);
    dataset.users.push_back(std::move(user));
  }
  Validate(dataset);
  return dataset;
}

Dataset LoadDataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return ParseDataset(in);
}

void WriteDataset(const Dataset& dataset, std::ostream& out) {
  for (const auto& u : dataset.users) {
    out << UserToJson(u, dataset.label(u.label)).dump() << '\n';
  }
}

void SaveDataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset " + path.string());
  WriteDataset(dataset, out);
}

Dataset FilterMinorityClasses(const Dataset& dataset, std::size_t min_count) {
  if (min_count == 0) throw ConfigError("min_count must be >= 1");
  const auto counts = dataset.ClassCounts();
  std::vector<std::optional<LabelId>> remap(dataset.labels.size());
  Dataset out;
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    if (counts[i] >= min_count) {
      remap[i] = MakeLabelId(out.labels.size());
      out.labels.push_back(dataset.labels[i]);
    }
  }
  if (out.labels.empty()) {
    throw DataError("every class has fewer than " + std::to_string(min_count) +
                    " users; dataset would be empty");
  }
  for (const auto& u : dataset.users) {
    if (const auto& id = remap[Index(u.label)]) {
      UserRecord copy = u;
      copy.label = *id;
      out.users.push_back(std::move(copy));
    }
  }
  return out;
}

PartitionCounts RoundPartition(std::size_t n, const SplitRatios& ratios) {
  if (n < 3) throw DataError("class needs at least 3 users, has " + std::to_string(n));
  // The epsilon keeps exact products such as 0.7 * 10 from flooring to 6.
  auto floor_of = [n](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  };
  PartitionCounts c;
  c.train = std::min(floor_of(ratios.train), n);
  c.dev = std::min(floor_of(ratios.dev), n - c.train);
  c.test = n - c.train - c.dev;
  std::array<std::size_t*, 3> parts = {&c.train, &c.dev, &c.test};
  for (std::size_t* p : parts) {
    while (*p == 0) {
      std::size_t* largest = parts[0];
      for (std::size_t* q : parts) {
        if (*q > *largest) largest = q;
      }
      --*largest;
      ++*p;
    }
  }
  return c;
}

const std::vector<std::string>& FewShotSplit::subset(int shots, int seed_index) const {
  auto it = shot_subsets.find({shots, seed_index});
  if (it == shot_subsets.end()) {
    throw DataError("no " + std::to_string(shots) + "-shot subset for seed index " +
                    std::to_string(seed_index));
  }
  return it->second;
}

bool operator==(const FewShotSplit& a, const FewShotSplit& b) {
  return a.global_seed == b.global_seed && a.ratios.train == b.ratios.train &&
         a.ratios.dev == b.ratios.dev && a.ratios.test == b.ratios.test &&
         a.dev_cap == b.dev_cap && a.train_ids == b.train_ids && a.dev_ids == b.dev_ids &&
         a.test_ids == b.test_ids && a.dev_dropped_ids == b.dev_dropped_ids &&
         a.shot_seeds == b.shot_seeds && a.shot_subsets == b.shot_subsets &&
         a.shortfall_classes == b.shortfall_classes;
}

namespace {

std::vector<std::vector<std::size_t>> UsersByClass(const Dataset& dataset) {
  std::vector<std::vector<std::size_t>> by_class(dataset.labels.size());
  for (std::size_t i = 0; i < dataset.users.size(); ++i) {
    by_class.at(Index(dataset.users[i].label)).push_back(i);
  }
  return by_class;
}

}  // namespace

FewShotSplit MakeSplit(const Dataset& dataset, const SplitRatios& ratios,
                       std::uint64_t global_seed, std::optional<std::size_t> dev_cap) {
  if (ratios.train < 0 || ratios.dev < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  const auto by_class = UsersByClass(dataset);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < 3) {
      throw DataError("class '" + dataset.labels[c].name + "' has " +
                      std::to_string(by_class[c].size()) +
                      " users; at least 3 are needed to split");
    }
  }

  FewShotSplit split;
  split.global_seed = global_seed;
  split.ratios = ratios;
  split.shot_seeds = DefaultShotSeeds(global_seed);

  std::vector<std::vector<std::size_t>> dev_by_class(by_class.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::vector<std::size_t> members = by_class[c];
    Rng rng(MixSeed(global_seed, c));
    rng.Shuffle(std::span<std::size_t>(members));
    const PartitionCounts counts = RoundPartition(members.size(), ratios);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < counts.train; ++i) {
      split.train_ids.push_back(dataset.users[members[pos++]].user_id);
    }
    for (std::size_t i = 0; i < counts.dev; ++i) dev_by_class[c].push_back(members[pos++]);
    for (std::size_t i = 0; i < counts.test; ++i) {
      split.test_ids.push_back(dataset.users[members[pos++]].user_id);
    }
  }

  if (dev_cap) {
    split.dev_cap = *dev_cap;
  } else {
    std::vector<std::size_t> sizes;
    for (const auto& d : dev_by_class) sizes.push_back(d.size());
    std::sort(sizes.begin(), sizes.end());
    split.dev_cap = sizes.empty() ? 0 : sizes[(sizes.size() - 1) / 2];
  }
  for (const auto& dev : dev_by_class) {
    for (std::size_t i = 0; i < dev.size(); ++i) {
      auto& dst = i < split.dev_cap ? split.dev_ids : split.dev_dropped_ids;
      dst.push_back(dataset.users[dev[i]].user_id);
    }
  }
  return split;
}

std::array<std::uint64_t, 3> DefaultShotSeeds(std::uint64_t global_seed) {
  return {MixSeed(global_seed, 101), MixSeed(global_seed, 202), MixSeed(global_seed, 303)};
}

FewShotSplit MakeShotSubsets(const FewShotSplit& split, const Dataset& dataset,
                             std::span<const int> shots,
                             const std::array<std::uint64_t, 3>& seeds) {
  for (int s : shots) {
    if (s < 1 || s > 8) throw ConfigError("shot count must be in 1..8, got " + std::to_string(s));
  }
  if (seeds[0] == seeds[1] || seeds[0] == seeds[2] || seeds[1] == seeds[2]) {
    throw ConfigError("shot subset seeds must be distinct");
  }
  const auto index = dataset.IndexByUserId();
  std::vector<std::vector<std::string>> train_by_class(dataset.labels.size());
  for (const auto& id : split.train_ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("split references unknown user " + id);
    train_by_class[Index(dataset.users[it->second].label)].push_back(id);
  }

  FewShotSplit out = split;
  out.shot_seeds = seeds;
  out.shot_subsets.clear();
  out.shortfall_classes.clear();
  for (int s : shots) {
    for (int seed_index = 0; seed_index < 3; ++seed_index) {
      std::vector<std::string>& subset = out.shot_subsets[{s, seed_index}];
      const std::uint64_t base = MixSeed(seeds[seed_index], static_cast<std::uint64_t>(s));
      for (std::size_t c = 0; c < train_by_class.size(); ++c) {
        std::vector<std::string> pool = train_by_class[c];
        const std::size_t want = static_cast<std::size_t>(s);
        if (pool.size() < want) {
          if (!pool.empty()) {
            out.shortfall_classes.push_back({s, seed_index, dataset.labels[c].name, pool.size()});
          }
          subset.insert(subset.end(), pool.begin(), pool.end());
          continue;
        }
        Rng rng(MixSeed(base, c));
        // Partial Fisher-Yates: the first `want` slots are a uniform sample.
        for (std::size_t i = 0; i < want; ++i) {
          std::swap(pool[i], pool[i + rng.UniformIndex(pool.size() - i)]);
        }
        subset.insert(subset.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
      }
    }
  }
  return out;
}

ordered_json SplitToJson(const FewShotSplit& split) {
  ordered_json j;
  j["global_seed"] = split.global_seed;
  j["ratios"] = {split.ratios.train, split.ratios.dev, split.ratios.test};
  j["dev_cap"] = split.dev_cap;
  j["train_ids"] = split.train_ids;
  j["dev_ids"] = split.dev_ids;
  j["test_ids"] = split.test_ids;
  j["dev_dropped_ids"] = split.dev_dropped_ids;
  j["shot_seeds"] = split.shot_seeds;
  ordered_json subsets = ordered_json::object();
  for (const auto& [key, ids] : split.shot_subsets) {
    auto& per_shot = subsets[std::to_string(key.first)];
    if (per_shot.is_null()) {
      per_shot = ordered_json::array(
          {ordered_json::array(), ordered_json::array(), ordered_json::array()});
    }
    per_shot[static_cast<std::size_t>(key.second)] = ids;
  }
  j["shot_subsets"] = std::move(subsets);
  ordered_json shortfall = ordered_json::array();
  for (const auto& r : split.shortfall_classes) {
    shortfall.push_back({{"s", r.shots}, {"seed_index", r.seed_index}, {"label", r.label},
                         {"available", r.available}});
  }
  j["shortfall_classes"] = std::move(shortfall);
  return j;
}

FewShotSplit SplitFromJson(const ordered_json& j) {
  try {
    FewShotSplit split;
    split.global_seed = j.at("global_seed").get<std::uint64_t>();
    const auto& r = j.at("ratios");
    if (!r.is_array() || r.size() != 3) throw DataError("manifest ratios must have 3 entries");
    split.ratios = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
    split.dev_cap = j.at("dev_cap").get<std::size_t>();
    split.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    split.dev_ids = j.at("dev_ids").get<std::vector<std::string>>();
    split.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    if (j.contains("dev_dropped_ids")) {
      split.dev_dropped_ids = j.at("dev_dropped_ids").get<std::vector<std::string>>();
    }
    if (j.contains("shot_seeds")) {
      split.shot_seeds = j.at("shot_seeds").get<std::array<std::uint64_t, 3>>();
    }
    for (const auto& [shots, per_seed] : j.at("shot_subsets").items()) {
      if (!per_seed.is_array() || per_seed.size() != 3) {
        throw DataError("shot_subsets." + shots + " must list 3 subsets");
      }
      for (int i = 0; i < 3; ++i) {
        split.shot_subsets[{std::stoi(shots), i}] =
            per_seed[static_cast<std::size_t>(i)].get<std::vector<std::string>>();
      }
    }
    for (const auto& r2 : j.at("shortfall_classes")) {
      split.shortfall_classes.push_back({r2.at("s").get<int>(), r2.at("seed_index").get<int>(),
                                         r2.at("label").get<std::string>(),
                                         r2.at("available").get<std::size_t>()});
    }
    return split;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split manifest: ") + e.what());
  }
}

}  // namespace fewuser::corpus
