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

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isomt/decode.hpp"

namespace isomt {

enum class SynchronyVariant {
  kAbsDiff,  // 1 / (1 + |len(t) - len(s)|)
  kRatio,    // 1 / (1 + len(t) / len(s))
};

enum class LogprobNormalization {
  kRaw,
  kMinMax,  // (logP - min) / (max - min) within each N-best list
};

std::string_view to_string(SynchronyVariant v);
SynchronyVariant parse_synchrony_variant(std::string_view s);
std::string_view to_string(LogprobNormalization n);
LogprobNormalization parse_normalization(std::string_view s);

struct RerankConfig {
  double alpha = 0.0;
  SynchronyVariant variant = SynchronyVariant::kRatio;
  LogprobNormalization normalization = LogprobNormalization::kRaw;

  void validate() const;
};

double synchrony_score(std::size_t tgt_len, std::size_t src_len,
                       SynchronyVariant variant);

// Fills s_p and s_d = (1 - alpha) logP + alpha S_p and sorts by s_d
// descending; equal s_d keeps the input order.
std::vector<ScoredHypothesis> rerank(std::vector<ScoredHypothesis> nbest,
                                     std::size_t src_len,
                                     const RerankConfig& cfg);

struct AlphaRow {
  double alpha;
  double bleu;
  double lc;
  double lcb;
};

struct AlphaTuning {
  double best_alpha = 0.0;
  std::vector<AlphaRow> table;  // 21 rows, alpha = 0.00, 0.05, ..., 1.00
};

inline constexpr int kAlphaGridSteps = 20;

// Grid search maximizing LCB of the reranked 1-best against `references`;
// ties go to the smaller alpha.
AlphaTuning tune_alpha(std::span<const NBestList> lists,
                       std::span<const std::string> references,
                       SynchronyVariant variant,
                       LogprobNormalization normalization =
                           LogprobNormalization::kRaw);

// Reranked 1-best text for every list.
std::vector<std::string> rerank_one_best(std::span<const NBestList> lists,
                                         const RerankConfig& cfg);

}  // namespace isomt
