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

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.h"
#include "fewuser/errors.h"

namespace {

using fewuser::run_config::RunConfig;

RunConfig ConfigFrom(const std::string& path) {
  return path.empty() ? RunConfig() : fewuser::run_config::Load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot social user geolocation"};
  app.require_subcommand(1);

  std::string config_path, out, dataset, manifest, axis;
  std::optional<std::uint64_t> seed;
  std::vector<int> shots;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "run configuration (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "overrides split.seed and train.seed");
    cmd->add_option("--shots", shots, "overrides eval.shots (0 = zero-shot)")->delimiter(',');
    cmd->add_option("--out", out, "output directory")->required();
  };

  fewuser::synthetic::CorpusSpec spec;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--seed", spec.seed);
  synth->add_option("--classes", spec.classes);
  synth->add_option("--users-per-class", spec.users_per_class);
  synth->add_option("--profile-fields", spec.profile_fields);
  synth->add_option("--posts", spec.posts);
  synth->add_option("--noise-tokens", spec.noise_tokens);
  synth->add_option("--noise-vocab", spec.noise_vocab);
  synth->add_flag("--post-metadata", spec.post_metadata, "add source/hashtags/created_at");

  auto* preprocess = app.add_subcommand("preprocess", "filter, split and draw shot subsets");
  add_common(preprocess, false);
  preprocess->add_option("--dataset", dataset, "dataset (JSON lines); overrides dataset.path");

  auto* train = app.add_subcommand("train", "zero/few-shot run per configuration");
  add_common(train, true);

  auto* ablate = app.add_subcommand("ablate", "sweep one axis holding the rest at defaults");
  add_common(ablate, true);
  ablate->add_option("--axis", axis)
      ->required()
      ->check(CLI::IsMember(std::vector<std::string>(std::begin(fewuser::cli::kAxes),
                                                     std::end(fewuser::cli::kAxes))));

  auto* replay = app.add_subcommand("replay", "re-run a manifest and compare outputs");
  replay->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  replay->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    fewuser::cli::Overrides overrides;
    overrides.seed = seed;
    if (!shots.empty()) overrides.shots = shots;

    if (*synth) {
      fewuser::cli::Synth(spec, out);
    } else if (*preprocess) {
      RunConfig config = ConfigFrom(config_path);
      if (!dataset.empty()) config.dataset.path = dataset;
      fewuser::cli::ApplyOverrides(config, {seed, std::nullopt});
      std::vector<int> s = shots.empty() ? std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8} : shots;
      fewuser::cli::Preprocess(config, s, out);
    } else if (*train) {
      RunConfig config = ConfigFrom(config_path);
      fewuser::cli::ApplyOverrides(config, overrides);
      fewuser::cli::Train(config, out);
    } else if (*ablate) {
      RunConfig config = ConfigFrom(config_path);
      fewuser::cli::ApplyOverrides(config, overrides);
      fewuser::cli::Ablate(config, axis, out);
    } else if (*replay) {
      const auto differing = fewuser::cli::Replay(manifest, out);
      for (const auto& rel : differing) std::cerr << "differs: " << rel << "\n";
      if (!differing.empty()) return 4;
      std::cout << "replay reproduced every output\n";
    }
  } catch (const fewuser::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fewuser::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
