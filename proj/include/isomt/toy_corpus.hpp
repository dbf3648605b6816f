// Copyright 2026 The isomt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "isomt/corpus.hpp"

namespace isomt {

// Synthetic length-controllable translation task. Each concept has a stem of
// seven letters in each of two languages; a word at level k is the stem's
// first 3 + k letters. Sources use levels 1-3. A pair of class short, normal or
// long lowers, keeps or raises every word's level by one on the target side,
// so the sentence-level ratio always lands in the requested class.
struct ToyCorpusConfig {
  std::size_t n_pairs = 1200;
  std::uint64_t seed = 1;
  std::uint64_t lexicon_seed = 2026;
  int concepts = 24;
  int min_words = 2;
  int max_words = 5;
  // Sampling weights for short, normal, long pairs.
  std::array<double, 3> class_mix = {1.0, 1.0, 1.0};
  DirectionTag direction{"xa", "xb", std::nullopt};
};

struct ToyLexicon {
  std::vector<std::string> source_stems;
  std::vector<std::string> target_stems;
};

inline constexpr int kToyStemLength = 7;
inline constexpr int kToyMinForm = 3;

ToyLexicon make_toy_lexicon(int concepts, std::uint64_t seed);
Corpus make_toy_corpus(const ToyCorpusConfig& cfg);

}  // namespace isomt
