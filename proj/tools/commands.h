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

#ifndef FEWUSER_TOOLS_COMMANDS_H_
#define FEWUSER_TOOLS_COMMANDS_H_

// Entry points behind the fewuser subcommands. Each writes only under its
// output directory and finishes with manifest.json, from which the same
// files can be regenerated by Replay.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fewuser/run_config.h"
#include "fewuser/synthetic.h"

namespace fewuser::cli {

inline constexpr const char* kAxes[] = {"integration", "fusion", "prompt",
                                        "tweets",      "fields", "backbone"};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<int>> shots;
};

void ApplyOverrides(run_config::RunConfig& config, const Overrides& overrides);

void Synth(const synthetic::CorpusSpec& spec, const std::filesystem::path& out);
void Preprocess(const run_config::RunConfig& config, std::vector<int> shots,
                const std::filesystem::path& out);
void Train(const run_config::RunConfig& config, const std::filesystem::path& out);
void Ablate(const run_config::RunConfig& config, const std::string& axis,
            const std::filesystem::path& out);

// Re-executes the manifest's command into out and compares every output
// digest. Returns the relative paths that differ (empty on a faithful replay).
std::vector<std::string> Replay(const std::filesystem::path& manifest,
                                const std::filesystem::path& out);

}  // namespace fewuser::cli

#endif  // FEWUSER_TOOLS_COMMANDS_H_
