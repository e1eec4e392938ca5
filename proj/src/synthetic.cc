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

#include "fewuser/synthetic.h"

#include <array>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "fewuser/random.h"

namespace fewuser::synthetic {
namespace {

struct City {
  const char* name;
  double lat;
  double lon;
};

constexpr City kCities[] = {
    {"Paris", 48.8566, 2.3522},     {"London", 51.5074, -0.1278},
    {"Tokyo", 35.6762, 139.6503},   {"Berlin", 52.52, 13.405},
    {"Madrid", 40.4168, -3.7038},   {"Rome", 41.9028, 12.4964},
    {"Sydney", -33.8688, 151.2093}, {"Toronto", 43.6532, -79.3832},
    {"Chicago", 41.8781, -87.6298}, {"Boston", 42.3601, -71.0589},
    {"Seattle", 47.6062, -122.3321}, {"Moscow", 55.7558, 37.6173},
    {"Cairo", 30.0444, 31.2357},    {"Lagos", 6.5244, 3.3792},
    {"Mumbai", 19.076, 72.8777},    {"Delhi", 28.7041, 77.1025},
    {"Bangkok", 13.7563, 100.5018}, {"Lima", -12.0464, -77.0428},
    {"Dublin", 53.3498, -6.2603},   {"Vienna", 48.2082, 16.3738},
    {"Denver", 39.7392, -104.9903}, {"Houston", 29.7604, -95.3698},
    {"Atlanta", 33.749, -84.388},   {"Phoenix", 33.4484, -112.074},
    {"Miami", 25.7617, -80.1918},   {"Oslo", 59.9139, 10.7522},
    {"Lisbon", 38.7223, -9.1393},   {"Prague", 50.0755, 14.4378},
    {"Warsaw", 52.2297, 21.0122},   {"Athens", 37.9838, 23.7275},
    {"Istanbul", 41.0082, 28.9784}, {"Nairobi", -1.2921, 36.8219},
    {"Seoul", 37.5665, 126.978},    {"Manila", 14.5995, 120.9842},
    {"Jakarta", -6.2088, 106.8456}, {"Santiago", -33.4489, -70.6693},
    {"Bogota", 4.711, -74.0721},    {"Montreal", 45.5017, -73.5673},
    {"Melbourne", -37.8136, 144.9631}, {"Auckland", -36.8485, 174.7633},
};

constexpr const char* kProfileNames[] = {"name",     "description", "lang",
                                         "timezone", "url",         "title",
                                         "device",   "joined"};
constexpr const char* kSources[] = {"web", "android", "iphone", "ipad"};
constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ren", "to", "sa", "vu", "ne",
                                      "pe", "do", "ri", "zu", "fa", "gi", "ho", "ty"};

std::string NoiseWord(std::size_t index) {
  // Three syllables in base 16; distinct for index < 4096.
  std::string w;
  for (int i = 0; i < 3; ++i) {
    w += kSyllables[index % 16];
    index /= 16;
  }
  return w;
}

std::string Noise(Rng& rng, const CorpusSpec& spec, std::size_t count) {
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    if (i > 0) out += ' ';
    out += NoiseWord(rng.UniformIndex(spec.noise_vocab));
  }
  return out;
}

std::string Timestamp(std::size_t minutes_before) {
  // Counts back from 2016-05-31T23:59:00Z inside one month, so the format
  // stays trivially valid.
  const std::size_t total = 30 * 24 * 60 + 23 * 60 + 59 - minutes_before;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "2016-05-%02zuT%02zu:%02zu:00Z", 1 + total / (24 * 60),
                (total / 60) % 24, total % 60);
  return buf;
}

}  // namespace

corpus::Dataset Generate(const CorpusSpec& spec) {
  if (spec.classes == 0 || spec.classes > std::size(kCities)) {
    throw std::invalid_argument("synthetic corpus supports 1.." +
                                std::to_string(std::size(kCities)) + " classes");
  }
  if (spec.profile_fields > std::size(kProfileNames)) {
    throw std::invalid_argument("too many profile fields");
  }
  if (spec.noise_vocab == 0 || spec.noise_vocab > 4096) {
    throw std::invalid_argument("noise_vocab must be in 1..4096");
  }
  corpus::Dataset ds;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    corpus::LocationLabel label{kCities[c].name, std::nullopt, std::nullopt};
    if (spec.coordinates) {
      label.latitude = kCities[c].lat;
      label.longitude = kCities[c].lon;
    }
    ds.labels.push_back(std::move(label));
  }
  Rng rng(MixSeed(spec.seed, 0x5E7));
  // Users of different classes interleave, as in a crawled file.
  for (std::size_t i = 0; i < spec.users_per_class; ++i) {
    for (std::size_t c = 0; c < spec.classes; ++c) {
      corpus::UserRecord user;
      char id[32];
      std::snprintf(id, sizeof(id), "u%05zu", i * spec.classes + c);
      user.user_id = id;
      user.label = corpus::MakeLabelId(c);
      for (std::size_t f = 0; f < spec.profile_fields; ++f) {
        user.profile.emplace_back(kProfileNames[f], Noise(rng, spec, 2));
      }
      std::size_t minutes = rng.UniformIndex(600);
      for (std::size_t p = 0; p < spec.posts; ++p) {
        corpus::PostRecord post;
        const std::size_t lead = rng.UniformIndex(spec.noise_tokens + 1);
        const std::string before = Noise(rng, spec, lead);
        const std::string after = Noise(rng, spec, spec.noise_tokens - lead);
        post.text = before;
        if (!post.text.empty()) post.text += ' ';
        post.text += kCities[c].name;
        if (!after.empty()) post.text += ' ' + after;
        if (spec.post_metadata) {
          post.source = kSources[rng.UniformIndex(std::size(kSources))];
          post.hashtags =
              std::vector<std::string>{NoiseWord(rng.UniformIndex(spec.noise_vocab))};
          post.created_at = Timestamp(minutes);
          minutes += 1 + rng.UniformIndex(600);
        }
        user.posts.push_back(std::move(post));
      }
      ds.users.push_back(std::move(user));
    }
  }
  corpus::Validate(ds);
  return ds;
}

}  // namespace fewuser::synthetic
