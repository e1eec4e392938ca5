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

#ifndef FEWUSER_SYNTHETIC_H_
#define FEWUSER_SYNTHETIC_H_

// Generated corpora with a known answer: every post of a user mentions the
// user's city among random filler words.

#include <cstddef>
#include <cstdint>

#include "fewuser/corpus.h"

namespace fewuser::synthetic {

struct CorpusSpec {
  std::size_t classes = 20;  // at most the number of built-in cities (40)
  std::size_t users_per_class = 40;
  std::size_t profile_fields = 5;
  std::size_t posts = 6;
  std::size_t noise_tokens = 3;  // filler words per post
  // Adds source, hashtags and created_at to every post.
  bool post_metadata = false;
  std::size_t noise_vocab = 400;
  bool coordinates = true;
  std::uint64_t seed = 0;
};

corpus::Dataset Generate(const CorpusSpec& spec);

}  // namespace fewuser::synthetic

#endif  // FEWUSER_SYNTHETIC_H_
