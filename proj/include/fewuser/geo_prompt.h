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

#ifndef FEWUSER_GEO_PROMPT_H_
#define FEWUSER_GEO_PROMPT_H_

// Location representations through hard, soft and semi-soft prompts, and the
// cached per-dataset location bank.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fewuser/autodiff.h"
#include "fewuser/corpus.h"
#include "fewuser/encoder.h"
#include "fewuser/params.h"
#include "json.hpp"

namespace fewuser::geo_prompt {

inline constexpr std::string_view kClassSlot = "[CLASS]";

// Fixed template with exactly one [CLASS] slot.
class HardPrompt {
 public:
  // Throws ConfigError unless the template has exactly one slot.
  explicit HardPrompt(std::string text);

  const std::string& text() const { return text_; }
  // Slot replaced by class_name verbatim; everything else byte-identical.
  std::string Apply(std::string_view class_name) const;

  friend bool operator==(const HardPrompt&, const HardPrompt&) = default;

 private:
  std::string text_;
};

enum class SoftInit { kRandom, kFromHard };

inline constexpr std::size_t kMaxSoftTokens = 14;
inline constexpr double kDefaultSoftSigma = 0.02;

// m trainable [V] vectors placed around the class-name tokens.
//
// Random:   [CLS] [V]_1 .. [V]_m  class-tokens
// FromHard: [CLS] then the template's pieces, each non-slot piece becoming a
//           [V] row initialized from its input embedding and the slot
//           expanded to the class-name tokens.
// Class-name tokens always use the encoder's (shared) embedding table.
class SoftPrompt {
 public:
  static SoftPrompt Random(std::size_t m, std::size_t hidden, double sigma,
                           std::uint64_t seed);
  // Throws ConfigError if the slot is glued to word characters, since the
  // layout could then not reproduce the hard tokenization.
  static SoftPrompt FromHard(const HardPrompt& prompt,
                             const encoder::TextEncoder& encoder);

  SoftInit init() const { return init_; }
  std::size_t m() const { return m_; }
  // Number of [V] rows before the class tokens.
  std::size_t slot_position() const { return slot_position_; }
  const std::optional<HardPrompt>& source() const { return source_; }
  // [m x H]; undefined when m == 0 (a slot-only template).
  const ad::Var& vectors() const { return vectors_; }
  const ParamSet& params() const { return params_; }

 private:
  SoftInit init_ = SoftInit::kRandom;
  std::size_t m_ = 0;
  std::size_t slot_position_ = 0;
  std::optional<HardPrompt> source_;
  ParamSet params_;
  ad::Var vectors_;
};

using LocationPrompt = std::variant<HardPrompt, SoftPrompt>;

// encode(tokenize(apply_hard(prompt, label.name))) on the location branch.
ad::Var EncodeLocationHard(const encoder::TextEncoder& encoder, const HardPrompt& prompt,
                           const corpus::LocationLabel& label);
ad::Var EncodeLocationSoft(const encoder::TextEncoder& encoder, const SoftPrompt& prompt,
                           const corpus::LocationLabel& label);
ad::Var EncodeLocation(const encoder::TextEncoder& encoder, const LocationPrompt& prompt,
                       const corpus::LocationLabel& label);
// Rows g_l(l_j), [K x H].
ad::Var EncodeLocations(const encoder::TextEncoder& encoder, const LocationPrompt& prompt,
                        std::span<const corpus::LocationLabel> labels);

const ParamSet& PromptParams(const LocationPrompt& prompt);

// All K class labels of a dataset with their prompt. Inference embeddings
// are cached and recomputed whenever a parameter they depend on is written.
class LocationBank {
 public:
  LocationBank(std::vector<corpus::LocationLabel> labels, LocationPrompt prompt);

  std::size_t size() const { return labels_.size(); }
  const std::vector<corpus::LocationLabel>& labels() const { return labels_; }
  const LocationPrompt& prompt() const { return prompt_; }
  const ParamSet& params() const { return PromptParams(prompt_); }

  // [K x H] without gradient tracking; cached.
  const Matrix& Embeddings(const encoder::TextEncoder& encoder);
  // [K x H] with gradients to encoder and prompt parameters; never cached.
  ad::Var TrainingEmbeddings(const encoder::TextEncoder& encoder) const;

  bool cache_valid(const encoder::TextEncoder& encoder) const;
  void Invalidate() { cache_.reset(); }

 private:
  struct CacheKey {
    const encoder::TextEncoder* encoder = nullptr;
    std::uint64_t encoder_version = 0;
    std::uint64_t prompt_version = 0;
    friend bool operator==(const CacheKey&, const CacheKey&) = default;
  };
  CacheKey KeyFor(const encoder::TextEncoder& encoder) const;

  std::vector<corpus::LocationLabel> labels_;
  LocationPrompt prompt_;
  std::optional<Matrix> cache_;
  CacheKey cache_key_;
};

enum class PromptKind { kHard, kSoft, kSemiSoft };

// One entry of a prompt bank file.
struct PromptSpec {
  std::string name;
  PromptKind kind = PromptKind::kSemiSoft;
  std::string templ = "I'm in [CLASS].";  // hard and semisoft
  std::size_t m = 4;                      // soft
  double sigma = kDefaultSoftSigma;       // soft

  friend bool operator==(const PromptSpec&, const PromptSpec&) = default;
};

// The nine hard templates compared in the prompt study, in order.
std::span<const std::string_view> ShippedTemplates();
inline constexpr std::string_view kDefaultSemiSoftTemplate = "I'm in [CLASS].";

// Hard entries for every shipped template plus the semi-soft default.
std::vector<PromptSpec> ShippedPromptBank();

std::vector<PromptSpec> PromptBankFromJson(const nlohmann::ordered_json& j);
nlohmann::ordered_json PromptBankToJson(std::span<const PromptSpec> bank);
std::vector<PromptSpec> LoadPromptBank(const std::filesystem::path& path);

LocationPrompt BuildPrompt(const PromptSpec& spec, const encoder::TextEncoder& encoder,
                           std::uint64_t seed);

std::string_view Name(PromptKind kind);
PromptKind ParsePromptKind(std::string_view name);

}  // namespace fewuser::geo_prompt

#endif  // FEWUSER_GEO_PROMPT_H_
