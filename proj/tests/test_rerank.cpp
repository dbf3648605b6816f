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

#include <cmath>
#include <algorithm>
#include <random>

#include "doctest.h"
#include "isomt/error.hpp"
#include "isomt/metrics.hpp"
#include "isomt/rerank.hpp"

using namespace isomt;

namespace {

ScoredHypothesis hyp(double logprob, std::size_t len, std::string text = {}) {
  ScoredHypothesis h;
  h.logprob = logprob;
  h.tgt_len = len;
  h.text = text.empty() ? std::string(len, 'x') : text;
  return h;
}

}  // namespace

TEST_CASE("synchrony sub-scores") {
  CHECK(synchrony_score(100, 100, SynchronyVariant::kAbsDiff) == 1.0);
  CHECK(synchrony_score(103, 100, SynchronyVariant::kAbsDiff) == 0.25);
  CHECK(synchrony_score(97, 100, SynchronyVariant::kAbsDiff) == 0.25);
  CHECK(synchrony_score(100, 100, SynchronyVariant::kRatio) == 0.5);
  CHECK(synchrony_score(50, 100, SynchronyVariant::kRatio) == 1.0 / 1.5);
  CHECK_THROWS_AS(synchrony_score(5, 0, SynchronyVariant::kRatio), ZeroSourceLengthError);
}

TEST_CASE("alpha zero keeps the model order") {
  std::vector<ScoredHypothesis> n{hyp(-1, 10), hyp(-2, 5), hyp(-3, 8)};
  const auto r = rerank(n, 8, {0.0, SynchronyVariant::kAbsDiff});
  for (std::size_t i = 0; i < n.size(); ++i) CHECK(r[i].logprob == n[i].logprob);
  for (const auto& h : r) CHECK(h.s_d == h.logprob);
}

TEST_CASE("alpha one picks the closest length") {
  std::vector<ScoredHypothesis> n{hyp(-1, 120), hyp(-5, 99), hyp(-2, 90)};
  const auto r = rerank(n, 100, {1.0, SynchronyVariant::kAbsDiff});
  CHECK(r.front().tgt_len == 99);
}

TEST_CASE("interpolated scores by hand") {
  std::vector<ScoredHypothesis> n{hyp(-1.0, 120), hyp(-1.5, 100), hyp(-2.0, 101)};
  const auto r = rerank(n, 100, {0.5, SynchronyVariant::kAbsDiff});
  const double expect[] = {0.5 * -1.0 + 0.5 / 21.0, 0.5 * -1.5 + 0.5 * 1.0,
                           0.5 * -2.0 + 0.5 * 0.5};
  CHECK(expect[0] == doctest::Approx(-0.47619).epsilon(1e-5));
  REQUIRE(r.size() == 3);
  CHECK(r[0].tgt_len == 100);
  CHECK(r[0].s_d == doctest::Approx(expect[1]));
  CHECK(r[1].s_d == doctest::Approx(expect[0]));
  CHECK(r[2].s_d == doctest::Approx(expect[2]));
  CHECK(r[1].s_p == doctest::Approx(1.0 / 21.0));
}

TEST_CASE("rerank is a stable permutation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lp(-10, 0);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredHypothesis> n;
    for (int i = 0; i < 12; ++i) n.push_back(hyp(std::round(lp(rng)), len(rng)));
    for (auto norm : {LogprobNormalization::kRaw, LogprobNormalization::kMinMax}) {
      const auto r = rerank(n, 20, {0.3, SynchronyVariant::kRatio, norm});
      REQUIRE(r.size() == n.size());
      for (std::size_t i = 1; i < r.size(); ++i) REQUIRE(r[i - 1].s_d >= r[i].s_d);
    }
  }
}

TEST_CASE("min-max normalization maps each list to [0, 1]") {
  std::vector<ScoredHypothesis> n{hyp(-4, 10), hyp(-2, 10), hyp(-3, 10)};
  const auto r = rerank(n, 10, {0.0, SynchronyVariant::kAbsDiff, LogprobNormalization::kMinMax});
  CHECK(r[0].s_d == 1.0);
  CHECK(r[1].s_d == 0.5);
  CHECK(r[2].s_d == 0.0);
  std::vector<ScoredHypothesis> flat{hyp(-2, 10)};
  const auto f = rerank(flat, 10, {0.0, SynchronyVariant::kAbsDiff, LogprobNormalization::kMinMax});
  CHECK(f[0].s_d == 0.0);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(rerank({hyp(-1, 2)}, 2, {1.5, SynchronyVariant::kRatio}), UsageError);
  CHECK(parse_synchrony_variant("abs") == SynchronyVariant::kAbsDiff);
  CHECK_THROWS_AS(parse_synchrony_variant("l1"), UsageError);
}

TEST_CASE("tuning on single-hypothesis lists ties at zero") {
  std::vector<NBestList> lists;
  std::vector<std::string> refs;
  for (int i = 0; i < 5; ++i) {
    lists.push_back({std::string(10, 'a'), {hyp(-1.0, 8 + i, std::string(8 + i, 'b'))}});
    refs.push_back(std::string(10, 'b'));
  }
  const auto t = tune_alpha(lists, refs, SynchronyVariant::kAbsDiff);
  CHECK(t.best_alpha == 0.0);
  CHECK(t.table.size() == 21);
  CHECK(t.table[7].alpha == doctest::Approx(0.35));
}

TEST_CASE("tuning finds a positive alpha when compliant output ranks second") {
  std::vector<NBestList> lists;
  std::vector<std::string> refs;
  const char* words[] = {"lorem", "ipsum", "dolor", "amet", "elit", "magna"};
  for (int i = 0; i < 6; ++i) {
    const std::string src = std::string(words[i]) + " " + words[(i + 1) % 6] + " sed";
    const std::string good = std::string(words[(i + 1) % 6]) + " " + words[i] + " sed";
    const std::string bad = good + " " + good;
    lists.push_back({src, {hyp(-1.0, char_length(bad), bad), hyp(-1.4, char_length(good), good),
                           hyp(-3.0, 1, "q")}});
    refs.push_back(good);
  }
  const auto t = tune_alpha(lists, refs, SynchronyVariant::kAbsDiff);
  CHECK(t.best_alpha > 0.0);
  CHECK(t.table.front().lcb < t.table[static_cast<int>(std::round(t.best_alpha * 20))].lcb);
  // The chosen alpha maximizes the table.
  for (const auto& row : t.table) CHECK(row.lcb <= t.table[static_cast<int>(std::round(t.best_alpha * 20))].lcb);
  const auto best = rerank_one_best(lists, {t.best_alpha, SynchronyVariant::kAbsDiff});
  CHECK(best == refs);
}

TEST_CASE("winner does not depend on input order") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> lp(-6, 0);
  std::uniform_int_distribution<std::size_t> len(5, 30);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredHypothesis> n;
    for (int i = 0; i < 8; ++i) {
      auto h = hyp(lp(rng), len(rng));
      h.ids = {i};
      n.push_back(h);
    }
    const RerankConfig cfg{0.4, SynchronyVariant::kAbsDiff};
    const auto a = rerank(n, 15, cfg);
    auto shuffled = n;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto b = rerank(shuffled, 15, cfg);
    REQUIRE(a.front().ids == b.front().ids);
  }
}

TEST_CASE("log-probability shifts and scaling") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> lp(-6, 0), c(-20, 20), k(0.1, 10);
  std::uniform_int_distribution<std::size_t> len(5, 30);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredHypothesis> n;
    for (int i = 0; i < 6; ++i) n.push_back(hyp(lp(rng), len(rng)));
    const double shift = c(rng), scale = k(rng);
    auto shifted = n, affine = n;
    for (auto& h : shifted) h.logprob += shift;
    for (auto& h : affine) h.logprob = scale * h.logprob + shift;
    const RerankConfig mm{0.3, SynchronyVariant::kAbsDiff, LogprobNormalization::kMinMax};
    const RerankConfig raw{0.3, SynchronyVariant::kAbsDiff};
    const auto winner = [](const std::vector<ScoredHypothesis>& r) { return r.front().logprob; };
    // Min-max scores ignore any increasing affine map of the list.
    REQUIRE(rerank(n, 15, mm).front().tgt_len == rerank(affine, 15, mm).front().tgt_len);
    // A shift moves every raw score by the same amount.
    REQUIRE(winner(rerank(n, 15, raw)) + shift == doctest::Approx(winner(rerank(shifted, 15, raw))));
  }
  // Raw scores are not scale invariant.
  std::vector<ScoredHypothesis> m{hyp(-1.0, 20), hyp(-2.0, 10)};
  const RerankConfig strong{0.6, SynchronyVariant::kAbsDiff};
  CHECK(rerank(m, 10, strong).front().tgt_len == 10);
  auto scaled = m;
  for (auto& h : scaled) h.logprob *= 10.0;
  CHECK(rerank(scaled, 10, strong).front().tgt_len == 20);
  const RerankConfig strong_mm{0.6, SynchronyVariant::kAbsDiff, LogprobNormalization::kMinMax};
  CHECK(rerank(m, 10, strong_mm).front().tgt_len == rerank(scaled, 10, strong_mm).front().tgt_len);
}
