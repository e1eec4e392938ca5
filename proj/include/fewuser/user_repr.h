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

#ifndef FEWUSER_USER_REPR_H_
#define FEWUSER_USER_REPR_H_

// UserRecord -> user embedding: field selection, integration into N
// sentences, per-sentence summary encoding (F, [N x H]) and fusion.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fewuser/autodiff.h"
#include "fewuser/corpus.h"
#include "fewuser/encoder.h"
#include "fewuser/params.h"

namespace fewuser::user_repr {

enum class IntegrationKind { kIn1, kIn2, kInT, kInUserPlus1, kInUserPlusT, kNoIn };
enum class FieldFilter { kAll, kNoPostTime, kNoPostMeta };

struct IntegrationStrategy {
  IntegrationKind kind = IntegrationKind::kIn1;
  FieldFilter field_filter = FieldFilter::kAll;
  std::size_t num_posts = 6;  // T
};

inline constexpr std::string_view kFieldSeparator = " ; ";
inline constexpr std::string_view kNameValueSeparator = ": ";

struct SelectedField {
  std::string name;
  std::string text;
  int post = -1;  // index among selected posts; -1 for profile fields

  friend bool operator==(const SelectedField&, const SelectedField&) = default;
};

// Profile fields, then for each of the T most recent posts: text, source,
// hashtags (space-joined), created_at, extra fields. Empty values are
// omitted; the filter drops created_at (NoPostTime) or all post metadata
// (NoPostMeta).
std::vector<SelectedField> SelectFields(const corpus::UserRecord& user,
                                        const IntegrationStrategy& strategy);

// Groups fields into sentences of "name: value" segments joined by " ; ".
// Returns a single empty sentence when there are no fields.
std::vector<std::string> Integrate(std::span<const SelectedField> fields,
                                   const IntegrationStrategy& strategy);

// Closed-form N for a user with the given profile-field count and per-post
// field counts (one entry per selected, non-empty post).
std::size_t ExpectedSentenceCount(IntegrationKind kind, std::size_t profile_fields,
                                  std::span<const std::size_t> post_field_counts);

// Row i = Encode(Tokenize(sentences[i])).
ad::Var EmbedSentences(const encoder::TextEncoder& encoder,
                       std::span<const std::string> sentences,
                       encoder::DropoutContext* dropout = nullptr);

enum class FusionKind { kMeanPool, kAdapter, kTransformerEnc, kMlp, kLstm, kBiLstm, kRnn, kGru };

inline constexpr FusionKind kAllFusionKinds[] = {
    FusionKind::kMeanPool, FusionKind::kAdapter, FusionKind::kTransformerEnc,
    FusionKind::kMlp,      FusionKind::kLstm,    FusionKind::kBiLstm,
    FusionKind::kRnn,      FusionKind::kGru};
inline constexpr IntegrationKind kAllIntegrationKinds[] = {
    IntegrationKind::kIn1,         IntegrationKind::kIn2,
    IntegrationKind::kInT,         IntegrationKind::kInUserPlus1,
    IntegrationKind::kInUserPlusT, IntegrationKind::kNoIn};

// Maps F [N x H] to u [1 x H]: the encoder transforms rows (sequence models
// read them in sentence order), then rows are mean-pooled.
class FusionEncoder {
 public:
  FusionEncoder(FusionKind kind, std::size_t hidden, std::uint64_t seed);

  FusionKind kind() const { return kind_; }
  std::size_t hidden() const { return hidden_; }
  const ParamSet& params() const { return params_; }

  ad::Var Transform(const ad::Var& features) const;  // [N x H] -> [N x H]
  ad::Var Fuse(const ad::Var& features) const;       // [N x H] -> [1 x H]

 private:
  struct Lstm {
    ad::Var w, u, b;  // gates packed i|f|g|o
    std::size_t hidden = 0;
  };
  Lstm MakeLstm(const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng);
  std::vector<ad::Var> RunLstm(const Lstm& cell, const std::vector<ad::Var>& rows) const;

  FusionKind kind_;
  std::size_t hidden_;
  ParamSet params_;
  std::vector<ad::Var> w_;  // kind-specific weights, see constructor
  Lstm fwd_, bwd_;
};

std::string_view Name(IntegrationKind kind);
std::string_view Name(FieldFilter filter);
std::string_view Name(FusionKind kind);
IntegrationKind ParseIntegrationKind(std::string_view name);
FieldFilter ParseFieldFilter(std::string_view name);
FusionKind ParseFusionKind(std::string_view name);

}  // namespace fewuser::user_repr

#endif  // FEWUSER_USER_REPR_H_
