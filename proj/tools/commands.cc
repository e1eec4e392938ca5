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

#include "commands.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fewuser/errors.h"
#include "fewuser/eval.h"
#include "fewuser/geo_prompt.h"
#include "fewuser/simd/kernels.h"
#include "fewuser/trainer.h"

namespace fewuser::cli {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kManifestFormat = "fewuser-run-manifest";

// Collects every file written under the output root with its digest.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& root() const { return root_; }

  void Write(const std::string& rel, const std::string& content) {
    const fs::path path = root_ / rel;
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
    digests_[rel] = run_config::GitBlobSha1(content);
  }
  void WriteJson(const std::string& rel, const Json& j) { Write(rel, j.dump(2) + "\n"); }
  // Records a file produced elsewhere (checkpoints).
  void Adopt(const fs::path& path) {
    digests_[fs::relative(path, root_).generic_string()] = run_config::FileSha1(path);
  }

  void Finish(Json manifest) {
    Json outputs = Json::object();
    for (const auto& [rel, sha] : digests_) outputs[rel] = sha;
    manifest["outputs"] = std::move(outputs);
    const fs::path path = root_ / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    out << manifest.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }

 private:
  fs::path root_;
  std::map<std::string, std::string> digests_;
};

Json ManifestHead(const std::string& command) {
  Json m;
  m["format"] = kManifestFormat;
  m["version"] = 1;
  m["command"] = command;
  // Kernel variants agree only to rounding, so byte-identical replay
  // assumes the same ISA.
  m["isa"] = std::string(simd::IsaName(simd::Active().isa));
  return m;
}

Json Inputs(const run_config::RunConfig& config) {
  Json inputs;
  inputs["dataset"] = {{"path", config.dataset.path},
                       {"sha1", run_config::FileSha1(config.dataset.path)}};
  if (config.model.encoder_checkpoint) {
    inputs["encoder_checkpoint"] = {
        {"path", config.model.encoder_checkpoint->string()},
        {"sha1", run_config::FileSha1(*config.model.encoder_checkpoint)}};
  }
  return inputs;
}

Json Seeds(const run_config::RunConfig& config, const corpus::FewShotSplit& split) {
  return {{"split", config.split.seed}, {"shots", split.shot_seeds}, {"train", config.train.seed}};
}

Json ShortfallJson(std::span<const corpus::ShortfallRecord> records) {
  Json out = Json::array();
  for (const auto& r : records) {
    out.push_back({{"s", r.shots}, {"seed_index", r.seed_index}, {"label", r.label},
                   {"available", r.available}});
  }
  return out;
}

std::string ShotName(int s) { return std::to_string(s) + "shot"; }

std::string Percent(double acc) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", acc * 100.0);
  return buf;
}

std::string Number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string OptionalNumber(const std::optional<double>& v) { return v ? Number(*v) : ""; }

// A model run on one shot setting: averaged report (zero-shot runs have a
// single report and no subsets).
struct Outcome {
  std::optional<trainer::RunResult> few;
  eval::EvalReport report;
};

Outcome RunSetting(const run_config::Prepared& prepared, const run_config::RunConfig& config,
                   int shots, const std::optional<fs::path>& checkpoints = std::nullopt) {
  Outcome o;
  if (shots == 0) {
    o.report = trainer::RunZeroShot(prepared.dataset, prepared.split, config.model);
  } else {
    o.few = trainer::RunFewShot(prepared.dataset, prepared.split, shots, config.model,
                                config.train, checkpoints);
    o.report = o.few->averaged;
  }
  return o;
}

// Wide table: one row per model/setting, one column per swept value.
std::string WideTable(const std::string& corner, const std::vector<std::string>& columns,
                      const std::vector<std::pair<std::string, std::vector<std::string>>>& rows) {
  std::vector<std::size_t> widths;
  std::size_t first = corner.size();
  for (const auto& [name, _] : rows) first = std::max(first, name.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    std::size_t w = columns[c].size();
    for (const auto& [_, cells] : rows) w = std::max(w, cells[c].size());
    widths.push_back(w);
  }
  std::ostringstream out;
  auto line = [&](const std::string& head, const std::vector<std::string>& cells) {
    out << head << std::string(first - head.size(), ' ');
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << " | " << std::string(widths[c] - cells[c].size(), ' ') << cells[c];
    }
    out << "\n";
  };
  line(corner, columns);
  out << std::string(first, '-');
  for (std::size_t w : widths) out << "-+-" << std::string(w, '-');
  out << "\n";
  for (const auto& [name, cells] : rows) line(name, cells);
  return out.str();
}

}  // namespace

void ApplyOverrides(run_config::RunConfig& config, const Overrides& overrides) {
  if (overrides.seed) {
    config.split.seed = *overrides.seed;
    config.train.seed = *overrides.seed;
    config.model.seed = *overrides.seed;
  }
  if (overrides.shots) {
    for (int s : *overrides.shots) {
      if (s < 0 || s > 8) throw ConfigError("--shots values must be in 0..8");
    }
    if (overrides.shots->empty()) throw ConfigError("--shots must not be empty");
    config.eval.shots = *overrides.shots;
  }
}

void Synth(const synthetic::CorpusSpec& spec, const fs::path& out) {
  OutputDir dir(out);
  std::ostringstream data;
  corpus::WriteDataset(synthetic::Generate(spec), data);
  dir.Write("dataset.jsonl", data.str());
  Json m = ManifestHead("synth");
  m["synth"] = {{"classes", spec.classes},
                {"users_per_class", spec.users_per_class},
                {"profile_fields", spec.profile_fields},
                {"posts", spec.posts},
                {"noise_tokens", spec.noise_tokens},
                {"noise_vocab", spec.noise_vocab},
                {"post_metadata", spec.post_metadata},
                {"coordinates", spec.coordinates},
                {"seed", spec.seed}};
  dir.Finish(std::move(m));
}

void Preprocess(const run_config::RunConfig& config, std::vector<int> shots, const fs::path& out) {
  const run_config::Prepared p = run_config::Prepare(config, shots);
  OutputDir dir(out);
  dir.WriteJson("split.json", corpus::SplitToJson(p.split));
  Json counts = Json::object();
  const auto per_class = p.dataset.ClassCounts();
  for (std::size_t i = 0; i < per_class.size(); ++i) {
    counts[p.dataset.labels[i].name] = per_class[i];
  }
  dir.WriteJson("class_counts.json", counts);
  Json m = ManifestHead("preprocess");
  m["config"] = run_config::ToJson(config);
  m["shots"] = shots;
  m["inputs"] = Inputs(config);
  m["seeds"] = Seeds(config, p.split);
  dir.Finish(std::move(m));
}

void Train(const run_config::RunConfig& config, const fs::path& out) {
  const run_config::Prepared p = run_config::Prepare(config, config.eval.shots);
  OutputDir dir(out);
  dir.WriteJson("config.json", run_config::ToJson(config));
  dir.WriteJson("split.json", corpus::SplitToJson(p.split));
  const std::string model_name(trainer::Name(config.model.kind));
  const auto& labels = p.dataset.labels;

  std::vector<eval::TableRow> rows;
  std::string acc_vs_shots = "shots,acc,meanD,medD\n";
  for (int s : config.eval.shots) {
    const std::string tag = ShotName(s);
    const fs::path ckpt = dir.root() / "checkpoints" / tag;
    Outcome o = RunSetting(p, config, s, s > 0 ? std::optional<fs::path>(ckpt) : std::nullopt);
    Json report;
    report["model"] = model_name;
    report["shots"] = s;
    report["averaged"] = eval::ReportToJson(o.report, labels);
    if (o.few) {
      Json subsets = Json::array();
      for (const trainer::SubsetRun& r : o.few->subsets) {
        subsets.push_back({{"seed_index", r.seed_index},
                           {"shot_seed", p.split.shot_seeds[r.seed_index]},
                           {"best_epoch", r.outcome.best_epoch},
                           {"best_dev_acc", r.outcome.best_dev_acc},
                           {"steps", r.outcome.steps},
                           {"report", eval::ReportToJson(r.report, labels)}});
        dir.Write("curve-" + tag + "-subset" + std::to_string(r.seed_index) + ".csv",
                  trainer::CurveCsv(r.outcome.curve));
      }
      report["subsets"] = std::move(subsets);
      report["shortfall"] = ShortfallJson(o.few->shortfall);
      for (const auto& entry : fs::recursive_directory_iterator(ckpt)) {
        if (entry.is_regular_file()) dir.Adopt(entry.path());
      }
    }
    dir.WriteJson("report-" + tag + ".json", report);
    rows.push_back({model_name + " " + tag, o.report});
    acc_vs_shots += std::to_string(s) + "," + Number(o.report.acc) + "," +
                    OptionalNumber(o.report.mean_d) + "," + OptionalNumber(o.report.med_d) + "\n";
  }
  dir.Write("report.txt", eval::FormatTable(rows));
  if (config.eval.shots.size() > 1) dir.Write("acc_vs_shots.csv", acc_vs_shots);

  Json m = ManifestHead("train");
  m["config"] = run_config::ToJson(config);
  m["inputs"] = Inputs(config);
  m["seeds"] = Seeds(config, p.split);
  dir.Finish(std::move(m));
}

void Ablate(const run_config::RunConfig& base, const std::string& axis, const fs::path& out) {
  if (std::find(std::begin(kAxes), std::end(kAxes), axis) == std::end(kAxes)) {
    throw ConfigError("unknown ablation axis '" + axis + "'");
  }
  const int shots = base.eval.shots.front();
  const run_config::Prepared p = run_config::Prepare(base, std::span(&shots, 1));
  OutputDir dir(out);
  std::string csv = "axis,value,model,acc,meanD,medD\n";
  std::string table;

  auto run = [&](run_config::RunConfig config, trainer::ModelKind kind,
                 const std::string& value) -> std::string {
    run_config::SetModelKind(config, kind);
    if (kind == trainer::ModelKind::kClassUser && shots == 0) return "-";
    const eval::EvalReport r = RunSetting(p, config, shots).report;
    csv += axis + "," + value + "," + std::string(trainer::Name(kind)) + "," + Number(r.acc) +
           "," + OptionalNumber(r.mean_d) + "," + OptionalNumber(r.med_d) + "\n";
    return Percent(r.acc);
  };
  // Sweeps `values`, rows FewUser and ClassUser.
  auto both_models = [&](const std::vector<std::string>& values, auto&& configure) {
    std::vector<std::pair<std::string, std::vector<std::string>>> rows;
    for (auto kind : {trainer::ModelKind::kFewUser, trainer::ModelKind::kClassUser}) {
      std::vector<std::string> cells;
      for (std::size_t i = 0; i < values.size(); ++i) {
        run_config::RunConfig c = base;
        configure(c, i);
        cells.push_back(run(c, kind, values[i]));
      }
      rows.emplace_back(std::string(trainer::Name(kind)), std::move(cells));
    }
    return WideTable("Model", values, rows);
  };

  if (axis == "integration") {
    std::vector<std::string> values;
    for (auto k : user_repr::kAllIntegrationKinds) values.emplace_back(user_repr::Name(k));
    table = both_models(values, [](run_config::RunConfig& c, std::size_t i) {
      c.model.strategy.kind = user_repr::kAllIntegrationKinds[i];
    });
  } else if (axis == "fusion") {
    std::vector<std::string> values;
    for (auto k : user_repr::kAllFusionKinds) values.emplace_back(user_repr::Name(k));
    // In1 yields one sentence, which every fusion encoder passes through.
    table = both_models(values, [](run_config::RunConfig& c, std::size_t i) {
      c.model.strategy.kind = user_repr::IntegrationKind::kIn2;
      c.model.fusion = user_repr::kAllFusionKinds[i];
    });
  } else if (axis == "tweets") {
    std::vector<std::string> values;
    for (int t = 2; t <= 10; ++t) values.push_back(std::to_string(t));
    table = both_models(values, [](run_config::RunConfig& c, std::size_t i) {
      c.model.strategy.num_posts = i + 2;
    });
  } else if (axis == "fields") {
    const user_repr::FieldFilter filters[] = {user_repr::FieldFilter::kAll,
                                              user_repr::FieldFilter::kNoPostTime,
                                              user_repr::FieldFilter::kNoPostMeta};
    std::vector<std::string> values;
    for (auto f : filters) values.emplace_back(user_repr::Name(f));
    table = both_models(values, [&](run_config::RunConfig& c, std::size_t i) {
      c.auto_field_filter = false;
      c.model.strategy.field_filter = filters[i];
    });
  } else if (axis == "prompt") {
    std::vector<std::pair<std::string, std::vector<std::string>>> rows;
    for (std::string_view t : geo_prompt::ShippedTemplates()) {
      std::vector<std::string> cells;
      for (auto kind : {geo_prompt::PromptKind::kHard, geo_prompt::PromptKind::kSemiSoft}) {
        run_config::RunConfig c = base;
        c.model.prompt = {std::string(geo_prompt::Name(kind)), kind, std::string(t), 0,
                          geo_prompt::kDefaultSoftSigma};
        cells.push_back(run(c, trainer::ModelKind::kFewUser,
                            std::string(geo_prompt::Name(kind)) + ":" + std::string(t)));
      }
      rows.emplace_back("\"" + std::string(t) + "\"", std::move(cells));
    }
    table = WideTable("Prompt", {"Hard", "Semi-Soft"}, rows);
    std::vector<std::string> tokens, cells;
    for (std::size_t m = 1; m <= geo_prompt::kMaxSoftTokens; ++m) {
      run_config::RunConfig c = base;
      c.model.prompt = {"soft", geo_prompt::PromptKind::kSoft, "", m,
                        geo_prompt::kDefaultSoftSigma};
      tokens.push_back(std::to_string(m));
      cells.push_back(run(c, trainer::ModelKind::kFewUser, "soft:" + std::to_string(m)));
    }
    table += "\n" + WideTable("# Tokens", tokens, {{"acc (%)", cells}});
  } else {  // backbone
    struct Variant {
      const char* name;
      void (*apply)(encoder::ToyEncoderConfig&);
    };
    const Variant variants[] = {
        {"toy-aligned", [](encoder::ToyEncoderConfig&) {}},
        {"toy-aligned-positional", [](encoder::ToyEncoderConfig& e) { e.positional = true; }},
        {"toy-aligned-ffn128", [](encoder::ToyEncoderConfig& e) { e.ffn_hidden = 128; }},
        {"toy-aligned-h16", [](encoder::ToyEncoderConfig& e) { e.hidden = 16; }},
        {"toy-random", [](encoder::ToyEncoderConfig& e) { e.init = encoder::ToyInit::kRandom; }},
    };
    std::vector<std::pair<std::string, std::vector<std::string>>> rows;
    for (const Variant& v : variants) {
      run_config::RunConfig c = base;
      c.model.encoder_checkpoint.reset();
      v.apply(c.model.encoder);
      rows.push_back({v.name, {run(c, trainer::ModelKind::kFewUser, v.name)}});
    }
    table = WideTable("Backbone", {"acc (%)"}, rows);
  }

  dir.Write("ablation-" + axis + ".txt", table);
  dir.Write("ablation-" + axis + ".csv", csv);
  Json m = ManifestHead("ablate");
  m["axis"] = axis;
  m["config"] = run_config::ToJson(base);
  m["inputs"] = Inputs(base);
  m["seeds"] = Seeds(base, p.split);
  dir.Finish(std::move(m));
}

std::vector<std::string> Replay(const fs::path& manifest_path, const fs::path& out) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  Json m;
  try {
    m = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (m.value("format", "") != kManifestFormat || m.value("version", 0) != 1) {
    throw DataError("not a version-1 fewuser manifest");
  }
  if (m.contains("inputs")) {
    for (const auto& [name, input] : m["inputs"].items()) {
      const std::string path = input.at("path").get<std::string>();
      if (run_config::FileSha1(path) != input.at("sha1").get<std::string>()) {
        throw DataError("input '" + name + "' (" + path +
                        ") changed since the manifest was written");
      }
    }
  }
  const std::string command = m.at("command").get<std::string>();
  if (command == "synth") {
    const Json& s = m.at("synth");
    synthetic::CorpusSpec spec;
    spec.classes = s.at("classes");
    spec.users_per_class = s.at("users_per_class");
    spec.profile_fields = s.at("profile_fields");
    spec.posts = s.at("posts");
    spec.noise_tokens = s.at("noise_tokens");
    spec.noise_vocab = s.at("noise_vocab");
    spec.post_metadata = s.at("post_metadata");
    spec.coordinates = s.at("coordinates");
    spec.seed = s.at("seed");
    Synth(spec, out);
  } else {
    const run_config::RunConfig config = run_config::FromJson(m.at("config"));
    if (command == "preprocess") {
      Preprocess(config, m.at("shots").get<std::vector<int>>(), out);
    } else if (command == "train") {
      Train(config, out);
    } else if (command == "ablate") {
      Ablate(config, m.at("axis").get<std::string>(), out);
    } else {
      throw DataError("manifest names unknown command '" + command + "'");
    }
  }

  std::ifstream fresh_in(out / "manifest.json");
  const Json fresh = Json::parse(fresh_in);
  std::vector<std::string> differing;
  for (const auto& [rel, sha] : m.at("outputs").items()) {
    if (!fresh["outputs"].contains(rel) || fresh["outputs"][rel] != sha) differing.push_back(rel);
  }
  for (const auto& [rel, _] : fresh["outputs"].items()) {
    if (!m["outputs"].contains(rel)) differing.push_back(rel);
  }
  return differing;
}

}  // namespace fewuser::cli
