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

#include "fewuser/geo_prompt.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "fewuser/errors.h"

namespace fewuser::geo_prompt {
namespace {

std::size_t CountSlots(std::string_view text) {
  std::size_t count = 0;
  for (std::size_t pos = text.find(kClassSlot); pos != std::string_view::npos;
       pos = text.find(kClassSlot, pos + kClassSlot.size())) {
    ++count;
  }
  return count;
}

bool IsBoundary(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isspace(u) != 0 || std::ispunct(u) != 0;
}

// Class-name token ids on the location branch, edge-whitespace pieces dropped.
std::vector<encoder::TokenId> ClassTokenIds(const encoder::TextEncoder& encoder,
                                            std::string_view name) {
  const auto& tok = encoder.tokenizer();
  std::vector<std::string> pieces = tok.Pretokenize(name);
  std::erase(pieces, std::string(" "));
  return tok.PieceIds(pieces, encoder::Branch::kLocation);
}

constexpr std::string_view kShipped[] = {
    "I'm in [CLASS].",
    "A local from [CLASS].",
    "[CLASS] in the house!",
    "[CLASS] 's own.",
    "A user resides in [CLASS].",
    "Question: where does this user reside in? Answer: [CLASS].",
    "Question: which city does this user live in? Answer: [CLASS].",
    "[CLASS] ",
    "[CLASS]",
};

}  // namespace

HardPrompt::HardPrompt(std::string text) : text_(std::move(text)) {
  const std::size_t slots = CountSlots(text_);
  if (slots != 1) {
    throw ConfigError("prompt template must contain exactly one [CLASS] slot, found " +
                      std::to_string(slots) + " in \"" + text_ + "\"");
  }
}

std::string HardPrompt::Apply(std::string_view class_name) const {
  const std::size_t pos = text_.find(kClassSlot);
  std::string out = text_.substr(0, pos);
  out += class_name;
  out += text_.substr(pos + kClassSlot.size());
  return out;
}

SoftPrompt SoftPrompt::Random(std::size_t m, std::size_t hidden, double sigma,
                              std::uint64_t seed) {
  if (m < 1 || m > kMaxSoftTokens) {
    throw ConfigError("soft prompt length m must be in 1.." + std::to_string(kMaxSoftTokens) +
                      ", got " + std::to_string(m));
  }
  if (!(sigma > 0.0)) throw ConfigError("soft prompt sigma must be positive");
  SoftPrompt p;
  p.init_ = SoftInit::kRandom;
  p.m_ = m;
  p.slot_position_ = m;
  Rng rng(MixSeed(seed, 0x50F7));
  p.vectors_ = p.params_.Add("prompt.vectors", GaussianMatrix(m, hidden, sigma, rng));
  return p;
}

SoftPrompt SoftPrompt::FromHard(const HardPrompt& prompt, const encoder::TextEncoder& encoder) {
  const std::string& text = prompt.text();
  const std::size_t pos = text.find(kClassSlot);
  const std::size_t end = pos + kClassSlot.size();
  if ((pos > 0 && !IsBoundary(text[pos - 1])) || (end < text.size() && !IsBoundary(text[end]))) {
    throw ConfigError("semi-soft template needs whitespace or punctuation around [CLASS]: \"" +
                      text + "\"");
  }
  const auto& tok = encoder.tokenizer();
  const std::vector<std::string> pieces = tok.Pretokenize(text, kClassSlot);
  std::vector<std::string> template_pieces;
  SoftPrompt p;
  p.init_ = SoftInit::kFromHard;
  p.source_ = prompt;
  for (const auto& piece : pieces) {
    if (piece == encoder::Tokenizer::kSlotPiece) {
      p.slot_position_ = template_pieces.size();
    } else {
      template_pieces.push_back(piece);
    }
  }
  p.m_ = template_pieces.size();
  if (p.m_ > 0) {
    std::vector<encoder::TokenId> ids = {encoder::kSummaryToken};
    for (auto id : tok.PieceIds(template_pieces, encoder::Branch::kLocation)) ids.push_back(id);
    ad::NoGradGuard no_grad;
    const ad::Var rows = ad::SliceRows(encoder.LookupIds(ids), 1, p.m_);
    p.vectors_ = p.params_.Add("prompt.vectors", rows.value());
  }
  return p;
}

ad::Var EncodeLocationHard(const encoder::TextEncoder& encoder, const HardPrompt& prompt,
                           const corpus::LocationLabel& label) {
  return encoder.Encode(
      encoder.tokenizer().Tokenize(prompt.Apply(label.name), encoder::Branch::kLocation));
}

ad::Var EncodeLocationSoft(const encoder::TextEncoder& encoder, const SoftPrompt& prompt,
                           const corpus::LocationLabel& label) {
  if (prompt.m() > 0 && prompt.vectors().cols() != encoder.hidden_size()) {
    throw std::invalid_argument("soft prompt vectors have width " +
                                std::to_string(prompt.vectors().cols()) + ", encoder has " +
                                std::to_string(encoder.hidden_size()));
  }
  std::vector<encoder::TokenId> ids = {encoder::kSummaryToken};
  for (auto id : ClassTokenIds(encoder, label.name)) ids.push_back(id);
  const ad::Var looked_up = encoder.LookupIds(ids);
  const std::size_t name_len = ids.size() - 1;

  std::vector<ad::Var> parts = {ad::Row(looked_up, 0)};
  if (prompt.slot_position() > 0) {
    parts.push_back(ad::SliceRows(prompt.vectors(), 0, prompt.slot_position()));
  }
  if (name_len > 0) parts.push_back(ad::SliceRows(looked_up, 1, name_len));
  if (prompt.slot_position() < prompt.m()) {
    parts.push_back(ad::SliceRows(prompt.vectors(), prompt.slot_position(),
                                  prompt.m() - prompt.slot_position()));
  }
  ad::Var sequence = parts.size() == 1 ? parts.front() : ad::ConcatRows(parts);
  const std::size_t max_len = encoder.tokenizer().max_len(encoder::Branch::kLocation);
  if (sequence.rows() > max_len) sequence = ad::SliceRows(sequence, 0, max_len);
  return encoder.EncodeEmbedded(sequence);
}

ad::Var EncodeLocation(const encoder::TextEncoder& encoder, const LocationPrompt& prompt,
                       const corpus::LocationLabel& label) {
  return std::visit(
      [&](const auto& p) -> ad::Var {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, HardPrompt>) {
          return EncodeLocationHard(encoder, p, label);
        } else {
          return EncodeLocationSoft(encoder, p, label);
        }
      },
      prompt);
}

ad::Var EncodeLocations(const encoder::TextEncoder& encoder, const LocationPrompt& prompt,
                        std::span<const corpus::LocationLabel> labels) {
  if (labels.empty()) throw std::invalid_argument("location bank is empty");
  std::vector<ad::Var> rows;
  rows.reserve(labels.size());
  for (const auto& l : labels) rows.push_back(EncodeLocation(encoder, prompt, l));
  return rows.size() == 1 ? rows.front() : ad::ConcatRows(rows);
}

const ParamSet& PromptParams(const LocationPrompt& prompt) {
  static const ParamSet kEmpty;
  if (const auto* soft = std::get_if<SoftPrompt>(&prompt)) return soft->params();
  return kEmpty;
}

LocationBank::LocationBank(std::vector<corpus::LocationLabel> labels, LocationPrompt prompt)
    : labels_(std::move(labels)), prompt_(std::move(prompt)) {
  if (labels_.empty()) throw std::invalid_argument("location bank needs K >= 1 labels");
}

LocationBank::CacheKey LocationBank::KeyFor(const encoder::TextEncoder& encoder) const {
  return {&encoder, encoder.params().Version(), PromptParams(prompt_).Version()};
}

bool LocationBank::cache_valid(const encoder::TextEncoder& encoder) const {
  return cache_.has_value() && cache_key_ == KeyFor(encoder);
}

const Matrix& LocationBank::Embeddings(const encoder::TextEncoder& encoder) {
  if (!cache_valid(encoder)) {
    ad::NoGradGuard no_grad;
    cache_ = EncodeLocations(encoder, prompt_, labels_).value();
    cache_key_ = KeyFor(encoder);
  }
  return *cache_;
}

ad::Var LocationBank::TrainingEmbeddings(const encoder::TextEncoder& encoder) const {
  return EncodeLocations(encoder, prompt_, labels_);
}

std::span<const std::string_view> ShippedTemplates() { return kShipped; }

std::vector<PromptSpec> ShippedPromptBank() {
  std::vector<PromptSpec> bank;
  int i = 1;
  for (std::string_view t : kShipped) {
    bank.push_back({"hard-" + std::to_string(i++), PromptKind::kHard, std::string(t), 0,
                    kDefaultSoftSigma});
  }
  bank.push_back({"semisoft-default", PromptKind::kSemiSoft,
                  std::string(kDefaultSemiSoftTemplate), 0, kDefaultSoftSigma});
  return bank;
}

std::string_view Name(PromptKind kind) {
  switch (kind) {
    case PromptKind::kHard:
      return "hard";
    case PromptKind::kSoft:
      return "soft";
    case PromptKind::kSemiSoft:
      return "semisoft";
  }
  return "?";
}

PromptKind ParsePromptKind(std::string_view name) {
  if (name == "hard") return PromptKind::kHard;
  if (name == "soft") return PromptKind::kSoft;
  if (name == "semisoft") return PromptKind::kSemiSoft;
  throw ConfigError("unknown prompt kind '" + std::string(name) + "'");
}

std::vector<PromptSpec> PromptBankFromJson(const nlohmann::ordered_json& j) {
  if (!j.is_array()) throw ConfigError("prompt bank must be a JSON list");
  std::vector<PromptSpec> bank;
  for (const auto& e : j) {
    if (!e.is_object()) throw ConfigError("prompt bank entries must be objects");
    for (const auto& [key, _] : e.items()) {
      if (key != "name" && key != "kind" && key != "template" && key != "m" && key != "sigma") {
        throw ConfigError("unknown prompt bank key '" + key + "'");
      }
    }
    PromptSpec spec;
    try {
      spec.name = e.at("name").get<std::string>();
      spec.kind = ParsePromptKind(e.at("kind").get<std::string>());
      if (spec.kind == PromptKind::kSoft) {
        spec.templ.clear();
        spec.m = e.at("m").get<std::size_t>();
        if (e.contains("sigma")) spec.sigma = e.at("sigma").get<double>();
      } else {
        spec.templ = e.at("template").get<std::string>();
        spec.m = 0;
        HardPrompt validate(spec.templ);
      }
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError(std::string("prompt bank entry: ") + ex.what());
    }
    bank.push_back(std::move(spec));
  }
  return bank;
}

nlohmann::ordered_json PromptBankToJson(std::span<const PromptSpec> bank) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& s : bank) {
    nlohmann::ordered_json e;
    e["name"] = s.name;
    e["kind"] = Name(s.kind);
    if (s.kind == PromptKind::kSoft) {
      e["m"] = s.m;
      e["sigma"] = s.sigma;
    } else {
      e["template"] = s.templ;
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<PromptSpec> LoadPromptBank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open prompt bank " + path.string());
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prompt bank: ") + e.what());
  }
  return PromptBankFromJson(j);
}

LocationPrompt BuildPrompt(const PromptSpec& spec, const encoder::TextEncoder& encoder,
                           std::uint64_t seed) {
  switch (spec.kind) {
    case PromptKind::kHard:
      return HardPrompt(spec.templ);
    case PromptKind::kSoft:
      return SoftPrompt::Random(spec.m, encoder.hidden_size(), spec.sigma, seed);
    case PromptKind::kSemiSoft:
      return SoftPrompt::FromHard(HardPrompt(spec.templ), encoder);
  }
  throw std::logic_error("unhandled prompt kind");
}

}  // namespace fewuser::geo_prompt
