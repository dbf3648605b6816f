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

#include "isomt/toy_corpus.hpp"

#include <random>
#include <set>

#include "isomt/error.hpp"

namespace isomt {
namespace {

std::string make_stem(std::mt19937_64& rng, std::string_view consonants,
                      std::string_view vowels) {
  std::uniform_int_distribution<std::size_t> c(0, consonants.size() - 1);
  std::uniform_int_distribution<std::size_t> v(0, vowels.size() - 1);
  std::string s;
  for (int i = 0; i < kToyStemLength; ++i) {
    s.push_back(i % 2 == 0 ? consonants[c(rng)] : vowels[v(rng)]);
  }
  return s;
}

std::vector<std::string> make_stems(std::mt19937_64& rng, int n,
                                    std::string_view consonants,
                                    std::string_view vowels) {
  std::vector<std::string> stems;
  std::set<std::string> prefixes;
  while (static_cast<int>(stems.size()) < n) {
    auto stem = make_stem(rng, consonants, vowels);
    if (prefixes.insert(stem.substr(0, kToyMinForm)).second) {
      stems.push_back(std::move(stem));
    }
  }
  return stems;
}

}  // namespace

ToyLexicon make_toy_lexicon(int concepts, std::uint64_t seed) {
  if (concepts < 1 || concepts > 200) {
    throw UsageError("toy lexicon size must lie in [1, 200]");
  }
  std::mt19937_64 rng(seed);
  ToyLexicon lex;
  lex.source_stems = make_stems(rng, concepts, "bdgklmnprstv", "aeiou");
  lex.target_stems = make_stems(rng, concepts, "cfhjkmnqswxz", "aeiouy");
  return lex;
}

Corpus make_toy_corpus(const ToyCorpusConfig& cfg) {
  if (cfg.min_words < 1 || cfg.max_words < cfg.min_words) {
    throw UsageError("toy sentence length range is invalid");
  }
  const auto lex = make_toy_lexicon(cfg.concepts, cfg.lexicon_seed);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> words(cfg.min_words, cfg.max_words);
  std::uniform_int_distribution<int> concept_id(0, cfg.concepts - 1);
  std::uniform_int_distribution<int> level(1, 3);
  std::discrete_distribution<int> cls(cfg.class_mix.begin(), cfg.class_mix.end());
  Corpus corpus;
  corpus.direction = cfg.direction;
  corpus.pairs.reserve(cfg.n_pairs);
  for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
    const int n = words(rng);
    const int shift = cls(rng) - 1;
    std::string src, tgt;
    for (int w = 0; w < n; ++w) {
      const int c = concept_id(rng);
      const int lv = level(rng);
      if (w > 0) {
        src.push_back(' ');
        tgt.push_back(' ');
      }
      src += lex.source_stems[c].substr(0, kToyMinForm + lv);
      tgt += lex.target_stems[c].substr(0, kToyMinForm + lv + shift);
    }
    corpus.pairs.emplace_back(std::move(src), std::move(tgt));
  }
  return corpus;
}

}  // namespace isomt
