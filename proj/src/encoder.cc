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

#include "fewuser/encoder.h"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "fewuser/errors.h"

namespace fewuser::encoder {
namespace {

bool IsSpace(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool IsPunct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::uint64_t Fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::string_view kEdgeSpacePiece = " ";

}  // namespace

Tokenizer::Tokenizer(TokenizerConfig config) : config_(config) {
  if (config_.vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (config_.user_max_len < 1 || config_.location_max_len < 1) {
    throw ConfigError("max_len must be >= 1");
  }
}

std::size_t Tokenizer::max_len(Branch branch) const {
  return branch == Branch::kUser ? config_.user_max_len : config_.location_max_len;
}

std::vector<std::string> Tokenizer::Pretokenize(std::string_view text,
                                                std::string_view slot) const {
  std::vector<std::string> pieces;
  const std::size_t first = [&] {
    std::size_t i = 0;
    while (i < text.size() && IsSpace(text[i])) ++i;
    return i;
  }();
  if (first == text.size()) {
    if (!text.empty()) pieces.emplace_back(kEdgeSpacePiece);
    return pieces;
  }
  if (first > 0) pieces.emplace_back(kEdgeSpacePiece);

  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      pieces.push_back(std::move(word));
      word.clear();
    }
  };
  std::size_t i = first;
  while (i < text.size()) {
    if (!slot.empty() && text.compare(i, slot.size(), slot) == 0) {
      flush();
      pieces.emplace_back(kSlotPiece);
      i += slot.size();
      continue;
    }
    const char c = text[i];
    if (IsSpace(c)) {
      flush();
    } else if (IsPunct(c)) {
      flush();
      pieces.emplace_back(1, c);
    } else {
      word.push_back(config_.lowercase
                         ? static_cast<char>(std::tolower(static_cast<unsigned char>(c)))
                         : c);
    }
    ++i;
  }
  flush();
  if (IsSpace(text.back())) pieces.emplace_back(kEdgeSpacePiece);
  return pieces;
}

TokenId Tokenizer::WordId(std::string_view piece, Branch branch) const {
  const std::uint64_t salt =
      branch == Branch::kUser ? config_.salt : config_.location_salt;
  std::uint64_t h = Fnv1a(piece);
  if (salt != 0) h = MixSeed(h, salt);
  return static_cast<TokenId>(1 + h % (config_.vocab_size - 1));
}

std::vector<TokenId> Tokenizer::PieceIds(std::span<const std::string> pieces,
                                         Branch branch) const {
  std::vector<TokenId> ids;
  ids.reserve(pieces.size());
  for (const auto& p : pieces) ids.push_back(WordId(p, branch));
  return ids;
}

TokenSequence Tokenizer::Tokenize(std::string_view text, Branch branch) const {
  TokenSequence seq;
  seq.tokens.push_back(kSummaryToken);
  const std::size_t limit = max_len(branch);
  for (const auto& piece : Pretokenize(text)) {
    if (seq.tokens.size() >= limit) break;
    seq.tokens.push_back(WordId(piece, branch));
  }
  return seq;
}

ad::Var TextEncoder::LookupIds(std::span<const TokenId> ids) const {
  TokenSequence seq;
  seq.tokens.assign(ids.begin(), ids.end());
  seq.has_cls = !ids.empty() && ids.front() == kSummaryToken;
  return Lookup(seq);
}

ToyEncoder::ToyEncoder(ToyEncoderConfig config)
    : config_(config), tokenizer_(config.tokenizer) {
  const std::size_t h = config_.hidden;
  const std::size_t f = config_.ffn_hidden;
  const std::size_t v = config_.tokenizer.vocab_size;
  if (h == 0 || f == 0) throw ConfigError("toy encoder sizes must be positive");
  if (config_.dropout < 0.0 || config_.dropout >= 1.0) {
    throw ConfigError("dropout must be in [0, 1)");
  }
  Rng rng(MixSeed(config_.seed, 0x70E4));
  const double scale = 1.0 / std::sqrt(static_cast<double>(h));

  Matrix table = GaussianMatrix(v, h, scale, rng);
  if (config_.init == ToyInit::kAligned) {
    for (double& x : table.row(kSummaryToken)) x = 0.0;
  }
  embeddings_ = params_.Add("embeddings", std::move(table));
  if (config_.positional) {
    const double pos_scale = config_.init == ToyInit::kAligned ? 0.02 : scale;
    positions_ = params_.Add("positions",
                             GaussianMatrix(config_.max_positions, h, pos_scale, rng));
  }
  if (config_.init == ToyInit::kAligned) {
    wq_ = params_.Add("attn.wq", GaussianMatrix(h, h, 0.02, rng));
    wk_ = params_.Add("attn.wk", GaussianMatrix(h, h, 0.02, rng));
    wv_ = params_.Add("attn.wv", Matrix::Identity(h));
    wo_ = params_.Add("attn.wo", Matrix::Identity(h));
    w1_ = params_.Add("ffn.w1", GaussianMatrix(h, f, scale, rng));
    b1_ = params_.Add("ffn.b1", Matrix(1, f));
    w2_ = params_.Add("ffn.w2", Matrix(f, h));
    b2_ = params_.Add("ffn.b2", Matrix(1, h));
  } else {
    wq_ = params_.Add("attn.wq", GaussianMatrix(h, h, scale, rng));
    wk_ = params_.Add("attn.wk", GaussianMatrix(h, h, scale, rng));
    wv_ = params_.Add("attn.wv", GaussianMatrix(h, h, scale, rng));
    wo_ = params_.Add("attn.wo", GaussianMatrix(h, h, scale, rng));
    w1_ = params_.Add("ffn.w1", GaussianMatrix(h, f, scale, rng));
    b1_ = params_.Add("ffn.b1", Matrix(1, f));
    w2_ = params_.Add("ffn.w2",
                      GaussianMatrix(f, h, 1.0 / std::sqrt(static_cast<double>(f)), rng));
    b2_ = params_.Add("ffn.b2", Matrix(1, h));
  }
}

ad::Var ToyEncoder::Lookup(const TokenSequence& seq) const {
  if (!seq.has_cls || seq.tokens.empty() || seq.tokens.front() != kSummaryToken) {
    throw std::invalid_argument("token sequence must start with the summary token");
  }
  std::vector<std::size_t> rows;
  rows.reserve(seq.tokens.size());
  for (TokenId id : seq.tokens) {
    if (id >= vocab_size()) {
      throw std::out_of_range("token id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(vocab_size()));
    }
    rows.push_back(id);
  }
  return ad::GatherRows(embeddings_, rows);
}

ad::Var ToyEncoder::EncodeEmbedded(const ad::Var& embedded, DropoutContext* dropout) const {
  const std::size_t h = config_.hidden;
  if (embedded.cols() != h || embedded.rows() == 0) {
    throw std::invalid_argument("encode_embedded expects [L x " + std::to_string(h) +
                                "], got " + embedded.value().ShapeString());
  }
  ad::Var x = embedded;
  if (config_.positional) {
    if (embedded.rows() > config_.max_positions) {
      throw std::invalid_argument("sequence length " + std::to_string(embedded.rows()) +
                                  " exceeds max_positions");
    }
    x = ad::Add(x, ad::SliceRows(positions_, 0, embedded.rows()));
  }
  const ad::Var x0 = ad::Row(x, 0);
  const ad::Var query = ad::MatMul(x0, wq_);
  const ad::Var keys = ad::MatMul(x, wk_);
  const ad::Var values = ad::MatMul(x, wv_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h));
  const ad::Var attn = ad::SoftmaxRows(ad::Scale(ad::MatMulNT(query, keys), scale));
  ad::Var mixed = ad::MatMul(ad::MatMul(attn, values), wo_);
  if (dropout != nullptr && dropout->rng != nullptr && config_.dropout > 0.0) {
    Matrix mask(1, h);
    const double keep = 1.0 - config_.dropout;
    for (double& m : mask.flat()) m = dropout->rng->Uniform() < keep ? 1.0 / keep : 0.0;
    mixed = ad::MulConstant(mixed, std::move(mask));
  }
  const ad::Var z = ad::Add(x0, mixed);
  const ad::Var hidden = ad::Tanh(ad::AddBias(ad::MatMul(z, w1_), b1_));
  return ad::Add(z, ad::AddBias(ad::MatMul(hidden, w2_), b2_));
}

nlohmann::ordered_json ToyConfigToJson(const ToyEncoderConfig& c) {
  nlohmann::ordered_json j;
  j["hidden"] = c.hidden;
  j["ffn_hidden"] = c.ffn_hidden;
  j["positional"] = c.positional;
  j["max_positions"] = c.max_positions;
  j["dropout"] = c.dropout;
  j["init"] = c.init == ToyInit::kAligned ? "aligned" : "random";
  j["seed"] = c.seed;
  j["tokenizer"] = {{"vocab_size", c.tokenizer.vocab_size},
                    {"user_max_len", c.tokenizer.user_max_len},
                    {"location_max_len", c.tokenizer.location_max_len},
                    {"lowercase", c.tokenizer.lowercase},
                    {"salt", c.tokenizer.salt},
                    {"location_salt", c.tokenizer.location_salt}};
  return j;
}

ToyEncoderConfig ToyConfigFromJson(const nlohmann::ordered_json& j) {
  ToyEncoderConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  c.positional = j.at("positional").get<bool>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  const auto init = j.at("init").get<std::string>();
  if (init != "aligned" && init != "random") throw ConfigError("unknown toy init " + init);
  c.init = init == "aligned" ? ToyInit::kAligned : ToyInit::kRandom;
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& t = j.at("tokenizer");
  c.tokenizer.vocab_size = t.at("vocab_size").get<std::size_t>();
  c.tokenizer.user_max_len = t.at("user_max_len").get<std::size_t>();
  c.tokenizer.location_max_len = t.at("location_max_len").get<std::size_t>();
  c.tokenizer.lowercase = t.at("lowercase").get<bool>();
  c.tokenizer.salt = t.at("salt").get<std::uint64_t>();
  c.tokenizer.location_salt = t.at("location_salt").get<std::uint64_t>();
  return c;
}

nlohmann::ordered_json ToyEncoder::ToJson() const {
  nlohmann::ordered_json j;
  j["format"] = "fewuser-text-encoder";
  j["version"] = 1;
  j["kind"] = "toy";
  j["config"] = ToyConfigToJson(config_);
  j["params"] = ParamsToJson(params_);
  return j;
}

std::unique_ptr<ToyEncoder> ToyEncoder::FromJson(const nlohmann::ordered_json& j) {
  try {
    if (j.at("format") != "fewuser-text-encoder" || j.at("version") != 1 ||
        j.at("kind") != "toy") {
      throw DataError("not a version-1 toy encoder checkpoint");
    }
    auto enc = std::make_unique<ToyEncoder>(ToyConfigFromJson(j.at("config")));
    ParamsFromJson(enc->params(), j.at("params"));
    return enc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed encoder checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("encoder checkpoint: ") + e.what());
  }
}

void ToyEncoder::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << ToJson().dump() << '\n';
}

std::unique_ptr<ToyEncoder> ToyEncoder::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed encoder checkpoint: ") + e.what());
  }
  return FromJson(j);
}

}  // namespace fewuser::encoder
