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

#ifndef FEWUSER_RUN_CONFIG_H_
#define FEWUSER_RUN_CONFIG_H_

// The experiment configuration file and the run manifest written next to
// every output.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fewuser/corpus.h"
#include "fewuser/trainer.h"
#include "json.hpp"

namespace fewuser::run_config {

struct DatasetSection {
  std::string path;
  std::size_t min_count = 3;
};

struct SplitSection {
  std::uint64_t seed = 0;
  corpus::SplitRatios ratios;
  std::optional<std::size_t> dev_cap;
  std::optional<std::array<std::uint64_t, 3>> shot_seeds;
};

struct EvalSection {
  // 0 runs zero-shot inference. Several values also write acc-vs-shots.
  std::vector<int> shots = {8};
};

// Defaults are the best-performing configuration from the ablations, except
// train.lr, which uses the toy-encoder profile (1e-3).
struct RunConfig {
  DatasetSection dataset;
  SplitSection split;
  trainer::ModelConfig model;  // representation, prompt, objective, encoder
  trainer::TrainConfig train;
  EvalSection eval;
  // field_filter "auto": All for FewUser, NoPostTime for ClassUser.
  bool auto_field_filter = true;

  RunConfig();
};

user_repr::FieldFilter DefaultFieldFilter(trainer::ModelKind kind);
// Sets the model kind, re-deriving an automatic field filter.
void SetModelKind(RunConfig& config, trainer::ModelKind kind);

nlohmann::ordered_json ToJson(const RunConfig& config);
// Missing keys take their defaults; unknown keys and ill-typed values throw
// ConfigError naming the key. A relative dataset path or encoder checkpoint
// is resolved against base_dir.
RunConfig FromJson(const nlohmann::ordered_json& j, const std::filesystem::path& base_dir = {});
RunConfig Load(const std::filesystem::path& path);

// Runs minority filtering, the split and every shot subset the config needs.
struct Prepared {
  corpus::Dataset dataset;
  corpus::FewShotSplit split;
};
Prepared Prepare(const RunConfig& config, std::span<const int> shots);

// Git blob object id (SHA-1 over "blob <size>\0" + bytes), lowercase hex.
std::string GitBlobSha1(std::string_view bytes);
std::string FileSha1(const std::filesystem::path& path);

}  // namespace fewuser::run_config

#endif  // FEWUSER_RUN_CONFIG_H_
