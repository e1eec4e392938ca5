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

#include "fewuser/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fewuser/errors.h"
#include "fewuser/optim.h"
#include "fewuser/random.h"

namespace fewuser::trainer {
namespace {

std::unique_ptr<encoder::ToyEncoder> MakeEncoder(const ModelConfig& config) {
  if (config.encoder_checkpoint) return encoder::ToyEncoder::Load(*config.encoder_checkpoint);
  return std::make_unique<encoder::ToyEncoder>(config.encoder);
}

std::vector<const corpus::UserRecord*> Resolve(const corpus::Dataset& dataset,
                                               std::span<const std::string> ids) {
  const auto index = dataset.IndexByUserId();
  std::vector<const corpus::UserRecord*> users;
  users.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("split references unknown user '" + id + "'");
    users.push_back(&dataset.users[it->second]);
  }
  return users;
}

void WriteJsonFile(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void Validate(const TrainConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("train." + field + " " + why);
  };
  if (c.batch_size == 0) fail("batch_size", "must be positive");
  if (c.eval_batch_size == 0) fail("eval_batch_size", "must be positive");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) fail("lr", "must be positive");
  if (!(c.tau > 0.0) || !std::isfinite(c.tau)) fail("tau", "must be positive");
  if (!(c.opt_beta1 >= 0.0 && c.opt_beta1 < 1.0)) fail("opt_beta1", "must be in [0, 1)");
  if (!(c.opt_beta2 >= 0.0 && c.opt_beta2 < 1.0)) fail("opt_beta2", "must be in [0, 1)");
  if (!(c.weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (c.patience == 0) fail("patience", "must be positive");
}

std::string_view Name(ModelKind kind) {
  return kind == ModelKind::kClassUser ? "ClassUser" : "FewUser";
}

ModelKind ParseModelKind(std::string_view name) {
  if (name == "FewUser") return ModelKind::kFewUser;
  if (name == "ClassUser") return ModelKind::kClassUser;
  throw ConfigError("unknown model '" + std::string(name) + "'");
}

Model::Model(const ModelConfig& config, std::vector<corpus::LocationLabel> labels)
    : config_(config),
      encoder_(MakeEncoder(config)),
      fusion_(config.fusion, encoder_->hidden_size(), MixSeed(config.seed, 1)),
      bank_(std::move(labels),
            geo_prompt::BuildPrompt(config.prompt, *encoder_, MixSeed(config.seed, 2))) {
  if (bank_.size() == 0) throw DataError("model needs at least one location label");
  const std::size_t h = encoder_->hidden_size();
  params_.Extend(encoder_->params(), "encoder.");
  params_.Extend(fusion_.params(), "fusion.");
  if (config.kind == ModelKind::kFewUser) {
    params_.Extend(bank_.params());
    if (config.mining.k > 0) {
      match_head_.emplace(config.match_fusion, h, MixSeed(config.seed, 3));
      params_.Extend(match_head_->params(), "match.");
    }
  } else {
    class_head_.emplace(h, bank_.size(), MixSeed(config.seed, 4));
    params_.Extend(class_head_->params());
  }
}

ad::Var Model::EncodeUser(const corpus::UserRecord& user,
                          encoder::DropoutContext* dropout) const {
  const auto fields = user_repr::SelectFields(user, config_.strategy);
  const auto sentences = user_repr::Integrate(fields, config_.strategy);
  return fusion_.Fuse(user_repr::EmbedSentences(*encoder_, sentences, dropout));
}

Model::BatchLoss Model::Loss(std::span<const corpus::UserRecord* const> batch, double tau,
                             std::uint64_t seed, encoder::DropoutContext* dropout) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  BatchLoss out;
  std::vector<ad::Var> terms;
  terms.reserve(batch.size());
  if (config_.kind == ModelKind::kClassUser) {
    for (const corpus::UserRecord* u : batch) {
      const ad::Var loss =
          objectives::ClassLoss(*class_head_, EncodeUser(*u, dropout), corpus::Index(u->label));
      out.contrast += loss.scalar();
      terms.push_back(loss);
    }
  } else {
    const ad::Var locations = bank_.TrainingEmbeddings(*encoder_);
    const objectives::MatchHead* head = match_head_ ? &*match_head_ : nullptr;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const corpus::UserRecord& u = *batch[i];
      objectives::JointLossTerms t =
          objectives::JointLoss(EncodeUser(u, dropout), locations, corpus::Index(u.label), tau,
                                config_.mining, head, MixSeed(seed, i));
      out.contrast += t.contrast;
      out.match += t.match;
      terms.push_back(t.total);
    }
  }
  ad::Var sum = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) sum = ad::Add(sum, terms[i]);
  const double scale = 1.0 / static_cast<double>(batch.size());
  out.total = ad::Scale(sum, scale);
  out.contrast *= scale;
  out.match *= scale;
  return out;
}

std::vector<corpus::LabelId> Model::Predict(std::span<const corpus::UserRecord* const> users) {
  ad::NoGradGuard no_grad;
  std::vector<corpus::LabelId> out;
  out.reserve(users.size());
  if (config_.kind == ModelKind::kClassUser) {
    for (const corpus::UserRecord* u : users) {
      const Matrix logits = class_head_->Logits(EncodeUser(*u)).value();
      const auto row = logits.row(0);
      const auto best = std::max_element(row.begin(), row.end());
      out.push_back(corpus::MakeLabelId(static_cast<std::size_t>(best - row.begin())));
    }
    return out;
  }
  const Matrix& bank = bank_.Embeddings(*encoder_);
  for (const corpus::UserRecord* u : users) {
    const Matrix user = EncodeUser(*u).value();
    out.push_back(corpus::MakeLabelId(eval::Predict(user.row(0), bank)));
  }
  return out;
}

std::vector<std::filesystem::path> Model::SaveCheckpoints(
    const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto save = [&](const std::string& name, const ParamSet& params) {
    if (params.empty()) return;
    const auto path = dir / (name + ".json");
    WriteJsonFile(path, ParamsToJson(params));
    written.push_back(path);
  };
  const auto encoder_path = dir / "encoder.json";
  encoder_->Save(encoder_path);
  written.push_back(encoder_path);
  save("fusion", fusion_.params());
  if (config_.kind == ModelKind::kFewUser) {
    save("prompt", bank_.params());
    if (match_head_) save("match_head", match_head_->params());
  } else {
    save("class_head", class_head_->params());
  }
  return written;
}

double Accuracy(Model& model, const corpus::Dataset& dataset,
                std::span<const std::string> ids) {
  if (ids.empty()) throw DataError("accuracy over an empty user set");
  const auto users = Resolve(dataset, ids);
  const auto predicted = model.Predict(users);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < users.size(); ++i) correct += predicted[i] == users[i]->label;
  return static_cast<double>(correct) / static_cast<double>(users.size());
}

eval::EvalReport EvaluateOn(Model& model, const corpus::Dataset& dataset,
                            std::span<const std::string> ids) {
  const auto users = Resolve(dataset, ids);
  const auto predicted = model.Predict(users);
  std::vector<corpus::LabelId> gold;
  gold.reserve(users.size());
  for (const auto* u : users) gold.push_back(u->label);
  return eval::Evaluate(gold, predicted, dataset.labels);
}

TrainOutcome Train(Model& model, const corpus::Dataset& dataset,
                   std::span<const std::string> subset, std::span<const std::string> dev,
                   const TrainConfig& config) {
  Validate(config);
  if (subset.empty()) throw DataError("training subset is empty");
  if (dev.empty()) throw DataError("early stopping needs a nonempty dev set");
  std::vector<const corpus::UserRecord*> users = Resolve(dataset, subset);

  ParamSet& params = model.params();
  AdamW optimizer(params, {config.lr, config.opt_beta1, config.opt_beta2, 1e-8,
                           config.weight_decay});
  Rng dropout_rng(MixSeed(config.seed, 0xD0));
  encoder::DropoutContext dropout{&dropout_rng};

  TrainOutcome outcome;
  outcome.best_dev_acc = Accuracy(model, dataset, dev);
  outcome.curve.push_back({0, 0.0, 0.0, outcome.best_dev_acc});
  std::vector<Matrix> best = params.Snapshot();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle(MixSeed(config.seed, epoch));
    shuffle.Shuffle(std::span(users));
    double contrast = 0.0, match = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < users.size(); begin += config.batch_size) {
      const std::size_t end = std::min(users.size(), begin + config.batch_size);
      const std::span<const corpus::UserRecord* const> batch(users.data() + begin, end - begin);
      params.ZeroGrad();
      const std::uint64_t step_seed = MixSeed(MixSeed(config.seed, epoch), batches);
      const auto fail = [&](const std::string& what) {
        std::ostringstream msg;
        msg << what << " at epoch " << epoch << ", batch " << batches << " (users";
        for (const auto* u : batch) msg << ' ' << u->user_id;
        msg << ")";
        throw NumericError(msg.str());
      };
      Model::BatchLoss loss;
      try {
        loss = model.Loss(batch, config.tau, step_seed, &dropout);
      } catch (const NumericError& e) {
        fail(e.what());
      }
      const double value = loss.total.scalar();
      if (!std::isfinite(value)) fail("non-finite loss");
      ad::Backward(loss.total);
      if (!params.GradsFinite()) fail("non-finite gradient");
      optimizer.Step();
      contrast += loss.contrast;
      match += loss.match;
      ++batches;
      ++outcome.steps;
    }
    const double dev_acc = Accuracy(model, dataset, dev);
    outcome.curve.push_back({epoch, contrast / static_cast<double>(batches),
                             match / static_cast<double>(batches), dev_acc});
    if (dev_acc > outcome.best_dev_acc) {
      outcome.best_dev_acc = dev_acc;
      outcome.best_epoch = epoch;
      best = params.Snapshot();
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  params.Restore(best);
  params.ZeroGrad();
  return outcome;
}

RunResult RunFewShot(const corpus::Dataset& dataset, const corpus::FewShotSplit& split,
                     int shots, const ModelConfig& model_config, const TrainConfig& train,
                     const std::optional<std::filesystem::path>& checkpoint_dir) {
  if (shots < 1) throw ConfigError("few-shot run needs shots >= 1");
  Validate(train);
  RunResult result;
  result.shots = shots;
  for (const auto& r : split.shortfall_classes) {
    if (r.shots == shots) result.shortfall.push_back(r);
  }

  // The three subset runs share nothing mutable and are collected in order.
  std::vector<std::future<SubsetRun>> jobs;
  for (int i = 0; i < 3; ++i) {
    const std::vector<std::string>& subset = split.subset(shots, i);
    jobs.push_back(std::async(std::launch::async, [&, i, &subset = subset] {
      Model model(model_config, dataset.labels);
      TrainConfig cfg = train;
      cfg.seed = MixSeed(train.seed, static_cast<std::uint64_t>(i));
      SubsetRun run;
      run.seed_index = i;
      run.outcome = Train(model, dataset, subset, split.dev_ids, cfg);
      run.report = EvaluateOn(model, dataset, split.test_ids);
      if (checkpoint_dir) {
        model.SaveCheckpoints(*checkpoint_dir / ("subset-" + std::to_string(i)));
      }
      return run;
    }));
  }
  std::vector<eval::EvalReport> reports;
  for (auto& job : jobs) {
    result.subsets.push_back(job.get());
    reports.push_back(result.subsets.back().report);
  }
  result.averaged = eval::Average(reports);
  return result;
}

eval::EvalReport RunZeroShot(const corpus::Dataset& dataset, const corpus::FewShotSplit& split,
                             const ModelConfig& model_config) {
  if (model_config.kind == ModelKind::kClassUser) {
    throw ConfigError("ClassUser has no zero-shot mode: its head is untrained");
  }
  Model model(model_config, dataset.labels);
  return EvaluateOn(model, dataset, split.test_ids);
}

std::string CurveCsv(std::span<const EpochRecord> curve) {
  std::string out = "epoch,L_contrast,L_match,dev_acc\n";
  for (const EpochRecord& r : curve) {
    out += std::to_string(r.epoch) + ",";
    out += r.epoch == 0 ? ",," : FormatDouble(r.contrast) + "," + FormatDouble(r.match) + ",";
    out += FormatDouble(r.dev_acc) + "\n";
  }
  return out;
}

}  // namespace fewuser::trainer
