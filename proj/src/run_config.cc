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

#include "fewuser/run_config.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fewuser/errors.h"

namespace fewuser::run_config {
namespace {

using Json = nlohmann::ordered_json;

// Copies user values over the defaults, rejecting keys the defaults lack.
void Overlay(Json& base, const Json& user, const std::string& where) {
  if (!user.is_object()) {
    throw ConfigError((where.empty() ? std::string("config") : "'" + where + "'") +
                      " must be an object");
  }
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    Json& slot = base[key];
    if (slot.is_object() && !value.is_null()) {
      Overlay(slot, value, path);
    } else {
      slot = value;
    }
  }
}

template <typename T>
T Get(const Json& section, const std::string& name, const std::string& key) {
  try {
    return section.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + name + "." + key + "' has the wrong type");
  }
}

template <typename Fn>
auto Checked(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::filesystem::path Resolve(const std::string& path, const std::filesystem::path& base) {
  std::filesystem::path p(path);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

std::string Hex(const unsigned char* bytes, unsigned len) {
  std::string out;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", bytes[i]);
    out += buf;
  }
  return out;
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RunConfig::RunConfig() {
  train.lr = 1e-3;
  model.strategy.field_filter = DefaultFieldFilter(model.kind);
}

user_repr::FieldFilter DefaultFieldFilter(trainer::ModelKind kind) {
  return kind == trainer::ModelKind::kClassUser ? user_repr::FieldFilter::kNoPostTime
                                                : user_repr::FieldFilter::kAll;
}

void SetModelKind(RunConfig& config, trainer::ModelKind kind) {
  config.model.kind = kind;
  if (config.auto_field_filter) config.model.strategy.field_filter = DefaultFieldFilter(kind);
}

Json ToJson(const RunConfig& c) {
  const trainer::ModelConfig& m = c.model;
  Json j;
  j["dataset"] = {{"path", c.dataset.path}, {"min_count", c.dataset.min_count}};
  j["split"] = {{"seed", c.split.seed},
                {"ratios", {c.split.ratios.train, c.split.ratios.dev, c.split.ratios.test}},
                {"dev_cap", c.split.dev_cap ? Json(*c.split.dev_cap) : Json(nullptr)},
                {"shot_seeds", c.split.shot_seeds ? Json(*c.split.shot_seeds) : Json(nullptr)}};
  const std::string filter = c.auto_field_filter
                                 ? std::string("auto")
                                 : std::string(user_repr::Name(m.strategy.field_filter));
  j["representation"] = {{"strategy", user_repr::Name(m.strategy.kind)},
                         {"T", m.strategy.num_posts},
                         {"field_filter", filter},
                         {"fusion", user_repr::Name(m.fusion)}};
  j["prompt"] = {{"kind", geo_prompt::Name(m.prompt.kind)},
                 {"template", m.prompt.templ},
                 {"m", m.prompt.m},
                 {"sigma", m.prompt.sigma}};
  j["objective"] = {{"model", trainer::Name(m.kind)},
                    {"tau", c.train.tau},
                    {"k", m.mining.k},
                    {"mining", objectives::Name(m.mining.kind)},
                    {"fusion_kind", objectives::Name(m.match_fusion)}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"eval_batch_size", c.train.eval_batch_size},
                {"epochs", c.train.epochs},
                {"lr", c.train.lr},
                {"opt_beta1", c.train.opt_beta1},
                {"opt_beta2", c.train.opt_beta2},
                {"weight_decay", c.train.weight_decay},
                {"patience", c.train.patience},
                {"seed", c.train.seed}};
  Json enc = encoder::ToyConfigToJson(m.encoder);
  enc["checkpoint"] = m.encoder_checkpoint ? Json(m.encoder_checkpoint->string()) : Json(nullptr);
  j["encoder"] = std::move(enc);
  j["eval"] = {{"shots", c.eval.shots}};
  return j;
}

RunConfig FromJson(const Json& user, const std::filesystem::path& base_dir) {
  Json j = ToJson(RunConfig());
  Overlay(j, user, "");

  RunConfig c;
  trainer::ModelConfig& m = c.model;
  const Json& ds = j["dataset"];
  c.dataset.path = Get<std::string>(ds, "dataset", "path");
  if (!c.dataset.path.empty()) c.dataset.path = Resolve(c.dataset.path, base_dir).string();
  c.dataset.min_count = Get<std::size_t>(ds, "dataset", "min_count");
  if (c.dataset.min_count < 1) throw ConfigError("config key 'dataset.min_count' must be >= 1");

  const Json& sp = j["split"];
  c.split.seed = Get<std::uint64_t>(sp, "split", "seed");
  const auto ratios = Get<std::vector<double>>(sp, "split", "ratios");
  if (ratios.size() != 3 || ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 ||
      std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ConfigError("config key 'split.ratios' must be three positive fractions summing to 1");
  }
  c.split.ratios = {ratios[0], ratios[1], ratios[2]};
  if (!sp["dev_cap"].is_null()) c.split.dev_cap = Get<std::size_t>(sp, "split", "dev_cap");
  if (!sp["shot_seeds"].is_null()) {
    c.split.shot_seeds = Get<std::array<std::uint64_t, 3>>(sp, "split", "shot_seeds");
  }

  const Json& rep = j["representation"];
  m.strategy.kind = Checked("representation.strategy", [&] {
    return user_repr::ParseIntegrationKind(Get<std::string>(rep, "representation", "strategy"));
  });
  m.strategy.num_posts = Get<std::size_t>(rep, "representation", "T");
  if (m.strategy.num_posts < 1) throw ConfigError("config key 'representation.T' must be >= 1");
  const auto filter = Get<std::string>(rep, "representation", "field_filter");
  c.auto_field_filter = filter == "auto";
  if (!c.auto_field_filter) {
    m.strategy.field_filter = Checked("representation.field_filter",
                                      [&] { return user_repr::ParseFieldFilter(filter); });
  }
  m.fusion = Checked("representation.fusion", [&] {
    return user_repr::ParseFusionKind(Get<std::string>(rep, "representation", "fusion"));
  });

  const Json& pr = j["prompt"];
  m.prompt.kind = Checked("prompt.kind", [&] {
    return geo_prompt::ParsePromptKind(Get<std::string>(pr, "prompt", "kind"));
  });
  m.prompt.name = std::string(geo_prompt::Name(m.prompt.kind));
  m.prompt.templ = Get<std::string>(pr, "prompt", "template");
  m.prompt.m = Get<std::size_t>(pr, "prompt", "m");
  m.prompt.sigma = Get<double>(pr, "prompt", "sigma");
  if (m.prompt.kind == geo_prompt::PromptKind::kSoft) {
    if (m.prompt.m < 1 || m.prompt.m > geo_prompt::kMaxSoftTokens) {
      throw ConfigError("config key 'prompt.m' must be in 1.." +
                        std::to_string(geo_prompt::kMaxSoftTokens));
    }
    if (!(m.prompt.sigma > 0.0)) throw ConfigError("config key 'prompt.sigma' must be positive");
  } else {
    Checked("prompt.template", [&] { return geo_prompt::HardPrompt(m.prompt.templ); });
  }

  const Json& ob = j["objective"];
  m.kind = Checked("objective.model", [&] {
    return trainer::ParseModelKind(Get<std::string>(ob, "objective", "model"));
  });
  if (c.auto_field_filter) m.strategy.field_filter = DefaultFieldFilter(m.kind);
  c.train.tau = Get<double>(ob, "objective", "tau");
  m.mining.k = Get<std::size_t>(ob, "objective", "k");
  m.mining.kind = Checked("objective.mining", [&] {
    return objectives::ParseMiningKind(Get<std::string>(ob, "objective", "mining"));
  });
  m.match_fusion = Checked("objective.fusion_kind", [&] {
    return objectives::ParseMatchFusion(Get<std::string>(ob, "objective", "fusion_kind"));
  });

  const Json& tr = j["train"];
  c.train.batch_size = Get<std::size_t>(tr, "train", "batch_size");
  c.train.eval_batch_size = Get<std::size_t>(tr, "train", "eval_batch_size");
  c.train.epochs = Get<std::size_t>(tr, "train", "epochs");
  c.train.lr = Get<double>(tr, "train", "lr");
  c.train.opt_beta1 = Get<double>(tr, "train", "opt_beta1");
  c.train.opt_beta2 = Get<double>(tr, "train", "opt_beta2");
  c.train.weight_decay = Get<double>(tr, "train", "weight_decay");
  c.train.patience = Get<std::size_t>(tr, "train", "patience");
  c.train.seed = Get<std::uint64_t>(tr, "train", "seed");
  trainer::Validate(c.train);

  Json enc = j["encoder"];
  if (!enc["checkpoint"].is_null()) {
    m.encoder_checkpoint =
        Resolve(Get<std::string>(enc, "encoder", "checkpoint"), base_dir);
  }
  enc.erase("checkpoint");
  try {
    m.encoder = encoder::ToyConfigFromJson(enc);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config section 'encoder' has a value of the wrong type");
  }
  m.seed = c.train.seed;

  c.eval.shots = Get<std::vector<int>>(j["eval"], "eval", "shots");
  if (c.eval.shots.empty()) throw ConfigError("config key 'eval.shots' must not be empty");
  for (int s : c.eval.shots) {
    if (s < 0 || s > 8) throw ConfigError("config key 'eval.shots' values must be in 0..8");
  }
  return c;
}

RunConfig Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return FromJson(j, path.parent_path());
}

Prepared Prepare(const RunConfig& config, std::span<const int> shots) {
  if (config.dataset.path.empty()) throw ConfigError("config key 'dataset.path' is required");
  Prepared p;
  const std::string bytes = ReadFile(config.dataset.path);
  {
    std::istringstream in(bytes);
    p.dataset = corpus::FilterMinorityClasses(corpus::ParseDataset(in), config.dataset.min_count);
  }
  std::vector<int> positive;
  for (int s : shots) {
    if (s > 0 && std::find(positive.begin(), positive.end(), s) == positive.end()) {
      positive.push_back(s);
    }
  }
  std::sort(positive.begin(), positive.end());

  // Splits are pure functions of the inputs below, so they may be cached.
  Json key = ToJson(config)["split"];
  key["dataset_sha1"] = GitBlobSha1(bytes);
  key["min_count"] = config.dataset.min_count;
  key["shots"] = positive;
  std::optional<std::filesystem::path> cached;
  if (const char* dir = std::getenv("FEWUSER_CACHE_DIR"); dir != nullptr && *dir != '\0') {
    cached = std::filesystem::path(dir) / ("split-" + GitBlobSha1(key.dump()) + ".json");
    if (std::filesystem::exists(*cached)) {
      try {
        p.split = corpus::SplitFromJson(Json::parse(ReadFile(*cached)));
        return p;
      } catch (const std::exception&) {
        // Unreadable cache entry: recompute and overwrite it.
      }
    }
  }
  p.split = corpus::MakeSplit(p.dataset, config.split.ratios, config.split.seed,
                              config.split.dev_cap);
  if (!positive.empty()) {
    p.split = corpus::MakeShotSubsets(
        p.split, p.dataset, positive,
        config.split.shot_seeds.value_or(corpus::DefaultShotSeeds(config.split.seed)));
  }
  if (cached) {
    std::filesystem::create_directories(cached->parent_path());
    std::ofstream out(*cached, std::ios::binary);
    out << corpus::SplitToJson(p.split).dump() << "\n";
  }
  return p;
}

std::string GitBlobSha1(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  return Hex(digest, len);
}

std::string FileSha1(const std::filesystem::path& path) { return GitBlobSha1(ReadFile(path)); }

}  // namespace fewuser::run_config
