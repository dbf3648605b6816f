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

#include "isomt/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "isomt/error.hpp"
#include "isomt/metrics.hpp"

namespace isomt {

std::string_view to_string(SynchronyVariant v) {
  return v == SynchronyVariant::kAbsDiff ? "abs" : "ratio";
}

SynchronyVariant parse_synchrony_variant(std::string_view s) {
  if (s == "abs" || s == "abs_diff") return SynchronyVariant::kAbsDiff;
  if (s == "ratio") return SynchronyVariant::kRatio;
  throw UsageError("unknown synchrony variant '" + std::string(s) +
                   "' (expected abs or ratio)");
}

std::string_view to_string(LogprobNormalization n) {
  return n == LogprobNormalization::kMinMax ? "minmax" : "raw";
}

LogprobNormalization parse_normalization(std::string_view s) {
  if (s == "raw") return LogprobNormalization::kRaw;
  if (s == "minmax") return LogprobNormalization::kMinMax;
  throw UsageError("unknown log-probability normalization '" + std::string(s) +
                   "' (expected raw or minmax)");
}

void RerankConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw UsageError("alpha must lie in [0, 1]");
  }
}

double synchrony_score(std::size_t tgt_len, std::size_t src_len,
                       SynchronyVariant variant) {
  if (src_len == 0) throw ZeroSourceLengthError("synchrony_score");
  if (variant == SynchronyVariant::kAbsDiff) {
    const double diff = tgt_len > src_len ? static_cast<double>(tgt_len - src_len)
                                          : static_cast<double>(src_len - tgt_len);
    return 1.0 / (1.0 + diff);
  }
  return 1.0 / (1.0 + static_cast<double>(tgt_len) / static_cast<double>(src_len));
}

std::vector<ScoredHypothesis> rerank(std::vector<ScoredHypothesis> nbest,
                                     std::size_t src_len,
                                     const RerankConfig& cfg) {
  cfg.validate();
  if (nbest.empty()) throw DataError("cannot rerank an empty N-best list");
  double lo = nbest.front().logprob;
  double hi = lo;
  for (const auto& h : nbest) {
    lo = std::min(lo, h.logprob);
    hi = std::max(hi, h.logprob);
  }
  for (auto& h : nbest) {
    double likelihood = h.logprob;
    if (cfg.normalization == LogprobNormalization::kMinMax) {
      likelihood = hi > lo ? (h.logprob - lo) / (hi - lo) : 0.0;
    }
    h.s_p = synchrony_score(h.tgt_len, src_len, cfg.variant);
    h.s_d = (1.0 - cfg.alpha) * likelihood + cfg.alpha * h.s_p;
  }
  std::stable_sort(nbest.begin(), nbest.end(),
                   [](const ScoredHypothesis& a, const ScoredHypothesis& b) {
                     return a.s_d > b.s_d;
                   });
  return nbest;
}

std::vector<std::string> rerank_one_best(std::span<const NBestList> lists,
                                         const RerankConfig& cfg) {
  std::vector<std::string> out;
  out.reserve(lists.size());
  for (const auto& list : lists) {
    auto ranked = rerank(list.hypotheses, char_length(list.source), cfg);
    out.push_back(ranked.front().text);
  }
  return out;
}

AlphaTuning tune_alpha(std::span<const NBestList> lists,
                       std::span<const std::string> references,
                       SynchronyVariant variant,
                       LogprobNormalization normalization) {
  if (lists.empty()) throw DataError("empty validation set for alpha tuning");
  if (lists.size() != references.size()) {
    throw DataError("alpha tuning needs one reference per N-best list");
  }
  std::vector<std::string> sources;
  for (const auto& l : lists) sources.push_back(l.source);
  AlphaTuning out;
  double best_lcb = -1.0;
  for (int i = 0; i <= kAlphaGridSteps; ++i) {
    RerankConfig cfg;
    cfg.alpha = static_cast<double>(i) / kAlphaGridSteps;
    cfg.variant = variant;
    cfg.normalization = normalization;
    const auto hyps = rerank_one_best(lists, cfg);
    AlphaRow row;
    row.alpha = cfg.alpha;
    row.bleu = corpus_bleu(hyps, references).score;
    row.lc = length_metrics(hyps, sources).lc;
    row.lcb = lcb(row.bleu, row.lc);
    out.table.push_back(row);
    if (row.lcb > best_lcb) {
      best_lcb = row.lcb;
      out.best_alpha = row.alpha;
    }
  }
  return out;
}

}  // namespace isomt
