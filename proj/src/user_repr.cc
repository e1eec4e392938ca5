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

#include "fewuser/user_repr.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "fewuser/errors.h"

namespace fewuser::user_repr {
namespace {

std::string JoinFields(std::span<const SelectedField* const> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += kFieldSeparator;
    out += fields[i]->name;
    out += kNameValueSeparator;
    out += fields[i]->text;
  }
  return out;
}

std::string JoinFields(const std::vector<const SelectedField*>& fields) {
  return JoinFields(std::span<const SelectedField* const>(fields));
}

Matrix Init(std::size_t rows, std::size_t cols, Rng& rng) {
  return GaussianMatrix(rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)), rng);
}

}  // namespace

std::vector<SelectedField> SelectFields(const corpus::UserRecord& user,
                                        const IntegrationStrategy& strategy) {
  std::vector<SelectedField> out;
  for (const auto& [name, value] : user.profile) {
    if (!value.empty()) out.push_back({name, value, -1});
  }
  const std::size_t posts = std::min(strategy.num_posts, user.posts.size());
  int post_index = 0;
  for (std::size_t i = 0; i < posts; ++i) {
    const corpus::PostRecord& p = user.posts[i];
    const std::size_t before = out.size();
    auto add = [&](std::string name, const std::string& value) {
      if (!value.empty()) out.push_back({std::move(name), value, post_index});
    };
    add("text", p.text);
    if (strategy.field_filter != FieldFilter::kNoPostMeta) {
      if (p.source) add("source", *p.source);
      if (p.hashtags) {
        std::string joined;
        for (const auto& tag : *p.hashtags) {
          if (tag.empty()) continue;
          if (!joined.empty()) joined += ' ';
          joined += tag;
        }
        add("hashtags", joined);
      }
      if (p.created_at && strategy.field_filter == FieldFilter::kAll) {
        add("created_at", *p.created_at);
      }
      if (p.extra) {
        for (const auto& [name, value] : *p.extra) add(name, value);
      }
    }
    if (out.size() > before) ++post_index;
  }
  return out;
}

std::vector<std::string> Integrate(std::span<const SelectedField> fields,
                                   const IntegrationStrategy& strategy) {
  if (fields.empty()) return {std::string()};
  std::vector<const SelectedField*> profile;
  std::map<int, std::vector<const SelectedField*>> posts;
  std::vector<const SelectedField*> all;
  std::vector<const SelectedField*> all_posts;
  for (const auto& f : fields) {
    all.push_back(&f);
    if (f.post < 0) {
      profile.push_back(&f);
    } else {
      posts[f.post].push_back(&f);
      all_posts.push_back(&f);
    }
  }

  std::vector<std::string> sentences;
  switch (strategy.kind) {
    case IntegrationKind::kIn1:
      sentences.push_back(JoinFields(all));
      break;
    case IntegrationKind::kIn2:
      sentences.push_back(JoinFields(profile));
      sentences.push_back(JoinFields(all_posts));
      break;
    case IntegrationKind::kInT:
      sentences.push_back(JoinFields(profile));
      for (const auto& [_, group] : posts) sentences.push_back(JoinFields(group));
      break;
    case IntegrationKind::kInUserPlus1:
      for (const SelectedField* f : profile) sentences.push_back(JoinFields({f}));
      sentences.push_back(JoinFields(all_posts));
      break;
    case IntegrationKind::kInUserPlusT:
      for (const SelectedField* f : profile) sentences.push_back(JoinFields({f}));
      for (const auto& [_, group] : posts) sentences.push_back(JoinFields(group));
      break;
    case IntegrationKind::kNoIn:
      for (const SelectedField* f : all) sentences.push_back(JoinFields({f}));
      break;
  }
  return sentences;
}

std::size_t ExpectedSentenceCount(IntegrationKind kind, std::size_t profile_fields,
                                  std::span<const std::size_t> post_field_counts) {
  const std::size_t posts = post_field_counts.size();
  std::size_t post_fields = 0;
  for (std::size_t c : post_field_counts) post_fields += c;
  switch (kind) {
    case IntegrationKind::kIn1:
      return 1;
    case IntegrationKind::kIn2:
      return 2;
    case IntegrationKind::kInT:
      return posts + 1;
    case IntegrationKind::kInUserPlus1:
      return profile_fields + 1;
    case IntegrationKind::kInUserPlusT:
      return profile_fields + posts;
    case IntegrationKind::kNoIn:
      return profile_fields + post_fields;
  }
  return 0;
}

ad::Var EmbedSentences(const encoder::TextEncoder& encoder,
                       std::span<const std::string> sentences,
                       encoder::DropoutContext* dropout) {
  if (sentences.empty()) throw std::invalid_argument("EmbedSentences: no sentences");
  std::vector<ad::Var> rows;
  rows.reserve(sentences.size());
  for (const auto& s : sentences) {
    rows.push_back(encoder.Encode(encoder.tokenizer().Tokenize(s, encoder::Branch::kUser),
                                  dropout));
  }
  if (rows.size() == 1) return rows.front();
  return ad::ConcatRows(rows);
}

FusionEncoder::FusionEncoder(FusionKind kind, std::size_t hidden, std::uint64_t seed)
    : kind_(kind), hidden_(hidden) {
  const std::size_t h = hidden;
  Rng rng(MixSeed(seed, 0xF5E));
  switch (kind) {
    case FusionKind::kMeanPool:
      break;
    case FusionKind::kAdapter: {
      const std::size_t bottleneck = std::max<std::size_t>(1, h / 4);
      w_ = {params_.Add("adapter.down.w", Init(h, bottleneck, rng)),
            params_.Add("adapter.down.b", Matrix(1, bottleneck)),
            params_.Add("adapter.up.w", Init(bottleneck, h, rng)),
            params_.Add("adapter.up.b", Matrix(1, h))};
      break;
    }
    case FusionKind::kMlp:
      w_ = {params_.Add("mlp.w1", Init(h, h, rng)), params_.Add("mlp.b1", Matrix(1, h)),
            params_.Add("mlp.w2", Init(h, h, rng)), params_.Add("mlp.b2", Matrix(1, h))};
      break;
    case FusionKind::kTransformerEnc: {
      if (h % 4 != 0) throw ConfigError("transformer fusion needs hidden divisible by 4");
      w_ = {params_.Add("enc.wq", Init(h, h, rng)),
            params_.Add("enc.wk", Init(h, h, rng)),
            params_.Add("enc.wv", Init(h, h, rng)),
            params_.Add("enc.wo", Init(h, h, rng)),
            params_.Add("enc.ln1.g", Matrix(1, h, 1.0)),
            params_.Add("enc.ln1.b", Matrix(1, h)),
            params_.Add("enc.ffn.w1", Init(h, 2 * h, rng)),
            params_.Add("enc.ffn.b1", Matrix(1, 2 * h)),
            params_.Add("enc.ffn.w2", Init(2 * h, h, rng)),
            params_.Add("enc.ffn.b2", Matrix(1, h)),
            params_.Add("enc.ln2.g", Matrix(1, h, 1.0)),
            params_.Add("enc.ln2.b", Matrix(1, h))};
      break;
    }
    case FusionKind::kRnn:
      w_ = {params_.Add("rnn.wx", Init(h, h, rng)), params_.Add("rnn.wh", Init(h, h, rng)),
            params_.Add("rnn.b", Matrix(1, h))};
      break;
    case FusionKind::kGru:
      w_ = {params_.Add("gru.wx", Init(h, 3 * h, rng)),
            params_.Add("gru.wh_zr", Init(h, 2 * h, rng)),
            params_.Add("gru.wh_n", Init(h, h, rng)),
            params_.Add("gru.b", Matrix(1, 3 * h))};
      break;
    case FusionKind::kLstm:
      fwd_ = MakeLstm("lstm.", h, h, rng);
      break;
    case FusionKind::kBiLstm:
      if (h % 2 != 0) throw ConfigError("BiLSTM fusion needs an even hidden size");
      fwd_ = MakeLstm("bilstm.fwd.", h, h / 2, rng);
      bwd_ = MakeLstm("bilstm.bwd.", h, h / 2, rng);
      break;
  }
}

FusionEncoder::Lstm FusionEncoder::MakeLstm(const std::string& prefix, std::size_t in,
                                            std::size_t hidden, Rng& rng) {
  Lstm cell;
  cell.hidden = hidden;
  cell.w = params_.Add(prefix + "w", Init(in, 4 * hidden, rng));
  cell.u = params_.Add(prefix + "u", Init(hidden, 4 * hidden, rng));
  cell.b = params_.Add(prefix + "b", Matrix(1, 4 * hidden));
  return cell;
}

std::vector<ad::Var> FusionEncoder::RunLstm(const Lstm& cell,
                                            const std::vector<ad::Var>& rows) const {
  const std::size_t n = cell.hidden;
  ad::Var h = ad::Constant(Matrix(1, n));
  ad::Var c = ad::Constant(Matrix(1, n));
  std::vector<ad::Var> outputs;
  outputs.reserve(rows.size());
  for (const ad::Var& x : rows) {
    const ad::Var gates =
        ad::AddBias(ad::Add(ad::MatMul(x, cell.w), ad::MatMul(h, cell.u)), cell.b);
    const ad::Var i = ad::Sigmoid(ad::SliceCols(gates, 0, n));
    const ad::Var f = ad::Sigmoid(ad::SliceCols(gates, n, n));
    const ad::Var g = ad::Tanh(ad::SliceCols(gates, 2 * n, n));
    const ad::Var o = ad::Sigmoid(ad::SliceCols(gates, 3 * n, n));
    c = ad::Add(ad::Mul(f, c), ad::Mul(i, g));
    h = ad::Mul(o, ad::Tanh(c));
    outputs.push_back(h);
  }
  return outputs;
}

ad::Var FusionEncoder::Transform(const ad::Var& features) const {
  if (features.cols() != hidden_ || features.rows() == 0) {
    throw std::invalid_argument("fusion expects [N x " + std::to_string(hidden_) + "], got " +
                                features.value().ShapeString());
  }
  const std::size_t rows = features.rows();
  const std::size_t h = hidden_;
  auto split_rows = [&] {
    std::vector<ad::Var> out;
    out.reserve(rows);
    for (std::size_t t = 0; t < rows; ++t) out.push_back(ad::Row(features, t));
    return out;
  };

  switch (kind_) {
    case FusionKind::kMeanPool:
      return features;
    case FusionKind::kAdapter: {
      const ad::Var down = ad::Tanh(ad::AddBias(ad::MatMul(features, w_[0]), w_[1]));
      return ad::Add(features, ad::AddBias(ad::MatMul(down, w_[2]), w_[3]));
    }
    case FusionKind::kMlp: {
      const ad::Var hid = ad::Tanh(ad::AddBias(ad::MatMul(features, w_[0]), w_[1]));
      return ad::AddBias(ad::MatMul(hid, w_[2]), w_[3]);
    }
    case FusionKind::kTransformerEnc: {
      constexpr std::size_t kHeads = 4;
      const std::size_t dh = h / kHeads;
      const ad::Var q = ad::MatMul(features, w_[0]);
      const ad::Var k = ad::MatMul(features, w_[1]);
      const ad::Var v = ad::MatMul(features, w_[2]);
      ad::Var heads;
      for (std::size_t head = 0; head < kHeads; ++head) {
        const ad::Var qh = ad::SliceCols(q, head * dh, dh);
        const ad::Var kh = ad::SliceCols(k, head * dh, dh);
        const ad::Var vh = ad::SliceCols(v, head * dh, dh);
        const ad::Var attn = ad::SoftmaxRows(
            ad::Scale(ad::MatMulNT(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh))));
        const ad::Var out = ad::MatMul(attn, vh);
        heads = heads.defined() ? ad::ConcatCols(heads, out) : out;
      }
      const ad::Var h1 =
          ad::LayerNormRows(ad::Add(features, ad::MatMul(heads, w_[3])), w_[4], w_[5]);
      const ad::Var ffn = ad::AddBias(
          ad::MatMul(ad::Tanh(ad::AddBias(ad::MatMul(h1, w_[6]), w_[7])), w_[8]), w_[9]);
      return ad::LayerNormRows(ad::Add(h1, ffn), w_[10], w_[11]);
    }
    case FusionKind::kRnn: {
      ad::Var state = ad::Constant(Matrix(1, h));
      std::vector<ad::Var> outputs;
      for (const ad::Var& x : split_rows()) {
        state = ad::Tanh(
            ad::AddBias(ad::Add(ad::MatMul(x, w_[0]), ad::MatMul(state, w_[1])), w_[2]));
        outputs.push_back(state);
      }
      return ad::ConcatRows(outputs);
    }
    case FusionKind::kGru: {
      ad::Var state = ad::Constant(Matrix(1, h));
      const ad::Var ones = ad::Constant(Matrix(1, h, 1.0));
      std::vector<ad::Var> outputs;
      for (const ad::Var& x : split_rows()) {
        const ad::Var xg = ad::AddBias(ad::MatMul(x, w_[0]), w_[3]);
        const ad::Var hg = ad::MatMul(state, w_[1]);
        const ad::Var z = ad::Sigmoid(ad::Add(ad::SliceCols(xg, 0, h), ad::SliceCols(hg, 0, h)));
        const ad::Var r = ad::Sigmoid(ad::Add(ad::SliceCols(xg, h, h), ad::SliceCols(hg, h, h)));
        const ad::Var n =
            ad::Tanh(ad::Add(ad::SliceCols(xg, 2 * h, h), ad::MatMul(ad::Mul(r, state), w_[2])));
        state = ad::Add(ad::Mul(ad::Sub(ones, z), n), ad::Mul(z, state));
        outputs.push_back(state);
      }
      return ad::ConcatRows(outputs);
    }
    case FusionKind::kLstm:
      return ad::ConcatRows(RunLstm(fwd_, split_rows()));
    case FusionKind::kBiLstm: {
      const std::vector<ad::Var> inputs = split_rows();
      const std::vector<ad::Var> forward = RunLstm(fwd_, inputs);
      std::vector<ad::Var> reversed(inputs.rbegin(), inputs.rend());
      std::vector<ad::Var> backward = RunLstm(bwd_, reversed);
      std::reverse(backward.begin(), backward.end());
      std::vector<ad::Var> outputs;
      for (std::size_t t = 0; t < rows; ++t) {
        outputs.push_back(ad::ConcatCols(forward[t], backward[t]));
      }
      return ad::ConcatRows(outputs);
    }
  }
  throw std::logic_error("unhandled fusion kind");
}

ad::Var FusionEncoder::Fuse(const ad::Var& features) const {
  const ad::Var transformed = Transform(features);
  if (transformed.rows() == 1) return transformed;
  return ad::MeanRows(transformed);
}

namespace {

template <typename Enum, std::size_t N>
Enum ParseEnum(std::string_view name, const std::pair<Enum, std::string_view> (&table)[N],
               const char* what) {
  for (const auto& [value, label] : table) {
    if (label == name) return value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

template <typename Enum, std::size_t N>
std::string_view EnumName(Enum value, const std::pair<Enum, std::string_view> (&table)[N]) {
  for (const auto& [v, label] : table) {
    if (v == value) return label;
  }
  return "?";
}

constexpr std::pair<IntegrationKind, std::string_view> kIntegrationNames[] = {
    {IntegrationKind::kIn1, "In1"},
    {IntegrationKind::kIn2, "In2"},
    {IntegrationKind::kInT, "InT"},
    {IntegrationKind::kInUserPlus1, "InUser+1"},
    {IntegrationKind::kInUserPlusT, "InUser+T"},
    {IntegrationKind::kNoIn, "NoIn"}};

constexpr std::pair<FieldFilter, std::string_view> kFilterNames[] = {
    {FieldFilter::kAll, "All"},
    {FieldFilter::kNoPostTime, "NoPostTime"},
    {FieldFilter::kNoPostMeta, "NoPostMeta"}};

constexpr std::pair<FusionKind, std::string_view> kFusionNames[] = {
    {FusionKind::kMeanPool, "MeanPool"},
    {FusionKind::kAdapter, "Adapter"},
    {FusionKind::kTransformerEnc, "TransformerEnc"},
    {FusionKind::kMlp, "MLP"},
    {FusionKind::kLstm, "LSTM"},
    {FusionKind::kBiLstm, "BiLSTM"},
    {FusionKind::kRnn, "RNN"},
    {FusionKind::kGru, "GRU"}};

}  // namespace

std::string_view Name(IntegrationKind kind) { return EnumName(kind, kIntegrationNames); }
std::string_view Name(FieldFilter filter) { return EnumName(filter, kFilterNames); }
std::string_view Name(FusionKind kind) { return EnumName(kind, kFusionNames); }
IntegrationKind ParseIntegrationKind(std::string_view name) {
  return ParseEnum(name, kIntegrationNames, "integration strategy");
}
FieldFilter ParseFieldFilter(std::string_view name) {
  return ParseEnum(name, kFilterNames, "field filter");
}
FusionKind ParseFusionKind(std::string_view name) {
  return ParseEnum(name, kFusionNames, "fusion encoder");
}

}  // namespace fewuser::user_repr
