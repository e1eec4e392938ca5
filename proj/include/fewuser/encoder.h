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

#ifndef FEWUSER_ENCODER_H_
#define FEWUSER_ENCODER_H_

// Text encoder interface shared by the user and location branches, the
// hashing tokenizer, and a small deterministic toy encoder.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fewuser/autodiff.h"
#include "fewuser/params.h"
#include "fewuser/random.h"
#include "json.hpp"

namespace fewuser::encoder {

using TokenId = std::uint32_t;

// Row 0 of every vocabulary is the summary ([CLS]) token.
inline constexpr TokenId kSummaryToken = 0;

struct TokenSequence {
  std::vector<TokenId> tokens;
  bool has_cls = true;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Which side of the model a text belongs to; selects truncation length and
// hash salt.
enum class Branch { kUser, kLocation };

struct TokenizerConfig {
  std::size_t vocab_size = 4096;
  std::size_t user_max_len = 128;
  std::size_t location_max_len = 32;
  bool lowercase = true;
  std::uint64_t salt = 0;
  // Equal to salt for an aligned vocabulary. A different value hashes the
  // location branch into an unrelated id space.
  std::uint64_t location_salt = 0;

  friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

// Lowercasing whitespace tokenizer hashed into vocab_size buckets.
//
// Words split on whitespace; ASCII punctuation becomes separate pieces.
// Leading and trailing whitespace each yield one " " piece, so "Tokyo" and
// "Tokyo " tokenize differently.
class Tokenizer {
 public:
  // Placeholder piece emitted for a template slot by Pretokenize.
  static constexpr std::string_view kSlotPiece = "\x01slot";

  explicit Tokenizer(TokenizerConfig config);

  const TokenizerConfig& config() const { return config_; }
  std::size_t max_len(Branch branch) const;

  // If `slot` is nonempty, each literal occurrence becomes kSlotPiece.
  std::vector<std::string> Pretokenize(std::string_view text,
                                       std::string_view slot = {}) const;
  TokenId WordId(std::string_view piece, Branch branch) const;
  std::vector<TokenId> PieceIds(std::span<const std::string> pieces,
                                Branch branch) const;

  // [CLS] followed by the text's ids, truncated to max_len(branch).
  TokenSequence Tokenize(std::string_view text, Branch branch = Branch::kUser) const;

 private:
  TokenizerConfig config_;
};

// Optional training-time dropout state for a forward pass.
struct DropoutContext {
  Rng* rng = nullptr;
};

// Any backbone usable by both branches. A pretrained model adapter
// implements the same surface.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;

  virtual std::size_t hidden_size() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual const ParamSet& params() const = 0;

  // Token-embedding lookup, [L x H], without position information.
  // Throws std::out_of_range naming any id outside the vocabulary.
  virtual ad::Var Lookup(const TokenSequence& seq) const = 0;
  ad::Var LookupIds(std::span<const TokenId> ids) const;

  // Final hidden state at the summary position, [1 x H]. Row 0 of
  // `embedded` is the summary-token embedding.
  virtual ad::Var EncodeEmbedded(const ad::Var& embedded,
                                 DropoutContext* dropout = nullptr) const = 0;

  ad::Var Encode(const TokenSequence& seq, DropoutContext* dropout = nullptr) const {
    return EncodeEmbedded(Lookup(seq), dropout);
  }
  ad::Var EncodeText(std::string_view text, Branch branch) const {
    return Encode(tokenizer().Tokenize(text, branch));
  }
};

enum class ToyInit {
  // Near-identity mixing so the summary state starts as a bag-of-tokens
  // average: the stand-in for a pretrained backbone.
  kAligned,
  kRandom,
};

struct ToyEncoderConfig {
  std::size_t hidden = 32;
  std::size_t ffn_hidden = 64;
  bool positional = false;
  std::size_t max_positions = 128;
  double dropout = 0.0;
  ToyInit init = ToyInit::kAligned;
  std::uint64_t seed = 0;
  TokenizerConfig tokenizer;

  friend bool operator==(const ToyEncoderConfig&, const ToyEncoderConfig&) = default;
};

// Token embedding -> one summary-query attention mixing layer with residual
// -> per-token tanh feed-forward with residual -> summary readout.
class ToyEncoder final : public TextEncoder {
 public:
  explicit ToyEncoder(ToyEncoderConfig config);

  std::size_t hidden_size() const override { return config_.hidden; }
  std::size_t vocab_size() const override { return config_.tokenizer.vocab_size; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  const ParamSet& params() const override { return params_; }
  const ToyEncoderConfig& config() const { return config_; }

  ad::Var Lookup(const TokenSequence& seq) const override;
  ad::Var EncodeEmbedded(const ad::Var& embedded,
                         DropoutContext* dropout = nullptr) const override;

  const ad::Var& embeddings() const { return embeddings_; }

  nlohmann::ordered_json ToJson() const;
  static std::unique_ptr<ToyEncoder> FromJson(const nlohmann::ordered_json& j);
  void Save(const std::filesystem::path& path) const;
  static std::unique_ptr<ToyEncoder> Load(const std::filesystem::path& path);

 private:
  ToyEncoderConfig config_;
  Tokenizer tokenizer_;
  ParamSet params_;
  ad::Var embeddings_;  // [V x H]
  ad::Var positions_;   // [max_positions x H], positional mode only
  ad::Var wq_, wk_, wv_, wo_;
  ad::Var w1_, b1_, w2_, b2_;
};

nlohmann::ordered_json ToyConfigToJson(const ToyEncoderConfig& config);
ToyEncoderConfig ToyConfigFromJson(const nlohmann::ordered_json& j);

}  // namespace fewuser::encoder

#endif  // FEWUSER_ENCODER_H_
