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

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isomt/corpus.hpp"
#include "isomt/model.hpp"
#include "isomt/tokenizer.hpp"
#include "isomt/train.hpp"

namespace isomt {

struct DecodeConfig {
  static constexpr int kDefaultBeam = 5;
  static constexpr int kRerankBeam = 50;

  int beam_size = kDefaultBeam;
  int n_best = 1;
  // Defaults to 2 * source characters + 8 tokens.
  std::optional<int> max_output_len;
  // Length class requested from a tagged model.
  std::optional<LengthClass> length_tag;
  // Overrides the translator's direction (bidirectional models).
  std::optional<DirectionTag> direction;

  void validate() const;
};

struct ScoredHypothesis {
  std::string text;
  std::vector<int> ids;  // generated tokens, ending in <eos> unless truncated
  double logprob = 0.0;  // sum over generated tokens including <eos>
  std::size_t tgt_len = 0;
  bool truncated = false;
  double s_p = std::numeric_limits<double>::quiet_NaN();
  double s_d = std::numeric_limits<double>::quiet_NaN();
};

// Beam search over token ids. Per step the best `beam_size` extensions are
// kept; those ending in <eos> move to the finished set. Scores are raw sums of
// log-probabilities; ties break lexicographically on token ids. Finished
// hypotheses rank ahead of truncated ones. Returns at most n_best entries.
std::vector<ScoredHypothesis> beam_search_ids(
    const ModelParams<double>& params, std::span<const int> src,
    std::span<const int> prefix, std::span<const int> allowed, int beam_size,
    int n_best, int max_output_len);

// Tokens a decoder may emit: <eos> and every character except <unk>.
std::vector<int> output_tokens(const Vocabulary& vocab);

// Binds a parameter snapshot (held in double precision) to its vocabulary
// and tagging scheme.
class Translator {
 public:
  Translator(const ModelParams<float>& params, const Vocabulary& vocab,
             TaggingScheme scheme, DirectionTag direction = {});

  std::vector<ScoredHypothesis> beam_search(std::string_view source,
                                            const DecodeConfig& cfg) const;
  ScoredHypothesis greedy(std::string_view source, const DecodeConfig& cfg) const;
  // log p(target | source) under the same inputs beam_search would build.
  double score(std::string_view source, std::string_view target,
               const DecodeConfig& cfg) const;

  DecoderInputs inputs(std::string_view source, const DecodeConfig& cfg) const;

  const Vocabulary& vocab() const { return vocab_; }
  TaggingScheme scheme() const { return scheme_; }
  const DirectionTag& direction() const { return direction_; }
  const ModelParams<double>& params() const { return params_; }

 private:
  ModelParams<double> params_;
  const Vocabulary& vocab_;
  TaggingScheme scheme_;
  DirectionTag direction_;
  std::vector<int> allowed_;
};

// 1-best text per source, order preserved. `jobs` > 1 decodes sentences on
// worker threads; output is identical to jobs = 1.
std::vector<std::string> translate_corpus(const Translator& translator,
                                          std::span<const std::string> sources,
                                          const DecodeConfig& cfg, int jobs = 1);

struct NBestList {
  std::string source;
  std::vector<ScoredHypothesis> hypotheses;
};

std::vector<NBestList> nbest_corpus(const Translator& translator,
                                    std::span<const std::string> sources,
                                    const DecodeConfig& cfg, int jobs = 1);

// JSONL: {"source": ..., "nbest": [{"text", "logprob", "tgt_len", ...}]}.
// Reranked lists additionally carry "s_p", "s_d" and "rank".
void write_nbest_jsonl(const std::filesystem::path& path,
                       std::span<const NBestList> lists);
std::vector<NBestList> read_nbest_jsonl(const std::filesystem::path& path);

}  // namespace isomt
