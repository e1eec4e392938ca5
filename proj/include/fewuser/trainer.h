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

#ifndef FEWUSER_TRAINER_H_
#define FEWUSER_TRAINER_H_

// The FewUser model (and its ClassUser variant), the joint training loop with
// dev-accuracy early stopping, and the zero/few-shot experiment runners.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fewuser/corpus.h"
#include "fewuser/encoder.h"
#include "fewuser/eval.h"
#include "fewuser/geo_prompt.h"
#include "fewuser/objectives.h"
#include "fewuser/params.h"
#include "fewuser/user_repr.h"

namespace fewuser::trainer {

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t eval_batch_size = 1;
  std::size_t epochs = 100;
  double lr = 8e-6;
  double tau = 0.03;
  double opt_beta1 = 0.85;
  double opt_beta2 = 0.999;
  double weight_decay = 0.01;
  std::size_t patience = 10;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Throws ConfigError naming the first offending field.
void Validate(const TrainConfig& config);

enum class ModelKind { kFewUser, kClassUser };

struct ModelConfig {
  ModelKind kind = ModelKind::kFewUser;
  encoder::ToyEncoderConfig encoder;
  // Loaded instead of a fresh initialization when set.
  std::optional<std::filesystem::path> encoder_checkpoint;
  user_repr::IntegrationStrategy strategy;
  user_repr::FusionKind fusion = user_repr::FusionKind::kMeanPool;
  geo_prompt::PromptSpec prompt{"semisoft-default", geo_prompt::PromptKind::kSemiSoft,
                                std::string(geo_prompt::kDefaultSemiSoftTemplate), 4,
                                geo_prompt::kDefaultSoftSigma};
  objectives::MatchFusion match_fusion = objectives::MatchFusion::kConcat;
  objectives::MiningPolicy mining;
  // Seeds the fusion encoder, prompt and heads.
  std::uint64_t seed = 0;
};

std::string_view Name(ModelKind kind);
ModelKind ParseModelKind(std::string_view name);

class Model {
 public:
  Model(const ModelConfig& config, std::vector<corpus::LocationLabel> labels);

  const ModelConfig& config() const { return config_; }
  const encoder::ToyEncoder& encoder() const { return *encoder_; }
  const user_repr::FusionEncoder& fusion() const { return fusion_; }
  const geo_prompt::LocationBank& bank() const { return bank_; }
  std::size_t num_classes() const { return bank_.size(); }
  // Every trainable parameter, prefixed by module.
  ParamSet& params() { return params_; }

  // g_u(u), [1 x H].
  ad::Var EncodeUser(const corpus::UserRecord& user,
                     encoder::DropoutContext* dropout = nullptr) const;

  // Training loss for a batch; locations are encoded once and shared.
  struct BatchLoss {
    ad::Var total;  // mean over the batch
    double contrast = 0.0;
    double match = 0.0;
  };
  BatchLoss Loss(std::span<const corpus::UserRecord* const> batch, double tau,
                 std::uint64_t seed, encoder::DropoutContext* dropout = nullptr);

  // Label index per user, without gradient tracking. FewUser ranks the
  // prompted locations by dot product; ClassUser takes the head's argmax.
  std::vector<corpus::LabelId> Predict(std::span<const corpus::UserRecord* const> users);

  // One JSON file per module under dir; zero-parameter modules are skipped.
  std::vector<std::filesystem::path> SaveCheckpoints(const std::filesystem::path& dir) const;

 private:
  ModelConfig config_;
  std::unique_ptr<encoder::ToyEncoder> encoder_;
  user_repr::FusionEncoder fusion_;
  geo_prompt::LocationBank bank_;
  std::optional<objectives::MatchHead> match_head_;
  std::optional<objectives::ClassHead> class_head_;
  ParamSet params_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the initial state
  double contrast = 0.0;  // mean training loss terms over the epoch
  double match = 0.0;
  double dev_acc = 0.0;
};

struct TrainOutcome {
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
  double best_dev_acc = 0.0;
  std::size_t steps = 0;
};

// Trains on `subset` and leaves the model at its best-dev snapshot. Dev
// accuracy is measured on the initial state and after every epoch; training
// stops after `patience` evaluations without strict improvement. Throws
// NumericError naming the batch if a loss or gradient is non-finite.
TrainOutcome Train(Model& model, const corpus::Dataset& dataset,
                   std::span<const std::string> subset, std::span<const std::string> dev,
                   const TrainConfig& config);

double Accuracy(Model& model, const corpus::Dataset& dataset,
                std::span<const std::string> ids);
eval::EvalReport EvaluateOn(Model& model, const corpus::Dataset& dataset,
                            std::span<const std::string> ids);

struct SubsetRun {
  int seed_index = 0;
  eval::EvalReport report;
  TrainOutcome outcome;
};

struct RunResult {
  int shots = 0;  // 0 for zero-shot
  std::vector<SubsetRun> subsets;
  eval::EvalReport averaged;
  std::vector<corpus::ShortfallRecord> shortfall;
};

// Trains a fresh model on each of the three s-shot subsets, evaluates each on
// the test set and averages. When checkpoint_dir is set, the best snapshot of
// subset i is written under checkpoint_dir/subset-i.
RunResult RunFewShot(const corpus::Dataset& dataset, const corpus::FewShotSplit& split,
                     int shots, const ModelConfig& model, const TrainConfig& train,
                     const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

// No optimizer steps: the initial (or loaded) snapshot on the test set.
eval::EvalReport RunZeroShot(const corpus::Dataset& dataset, const corpus::FewShotSplit& split,
                             const ModelConfig& model);

// "epoch,L_contrast,L_match,dev_acc" rows.
std::string CurveCsv(std::span<const EpochRecord> curve);

}  // namespace fewuser::trainer

#endif  // FEWUSER_TRAINER_H_
