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
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "isomt/corpus.hpp"
#include "isomt/error.hpp"
#include "isomt/metrics.hpp"
#include "json.hpp"

using namespace isomt;

namespace {

std::vector<std::string> v(std::initializer_list<const char*> xs) {
  return {xs.begin(), xs.end()};
}

std::string repeat(char c, std::size_t n) { return std::string(n, c); }

}  // namespace

TEST_CASE("bleu of identical text is 100") {
  const auto h = v({"the cat sat on the mat .", "a b c d e f"});
  const auto r = corpus_bleu(h, h);
  CHECK(r.score == 100.0);
  CHECK(r.brevity_penalty == 1.0);
}

TEST_CASE("bleu brevity penalty example") {
  const auto r = corpus_bleu(v({"a b c d"}), v({"a b c d e"}));
  for (int n = 0; n < 4; ++n) CHECK(r.precisions[n] == 1.0);
  CHECK(r.brevity_penalty == doctest::Approx(std::exp(1.0 - 5.0 / 4.0)).epsilon(1e-12));
  CHECK(std::abs(r.score - 77.88) < 0.01);
}

TEST_CASE("bleu smoothing with no 4-gram overlap") {
  const auto h = v({"a b c d e"});
  const auto ref = v({"a b c x d e"});
  // Counts by hand: unigrams 5/5, bigrams 3/4 (ab bc de), trigrams 1/3 (abc),
  // 4-grams 0/2; brevity penalty exp(1 - 6/5).
  const double p4 = (0.0 + 1.0) / (2.0 + 1.0);
  const double expected =
      100.0 * std::exp(1.0 - 6.0 / 5.0) * std::pow(1.0 * 0.75 * (1.0 / 3.0) * p4, 0.25);
  const auto smoothed = corpus_bleu(h, ref);
  CHECK(smoothed.matches[3] == 0);
  CHECK(smoothed.totals[3] == 2);
  CHECK(smoothed.score == doctest::Approx(expected).epsilon(1e-12));
  CHECK(smoothed.score > 0.0);
  BleuOptions plain;
  plain.smooth = false;
  CHECK(corpus_bleu(h, ref, plain).score == 0.0);
}

TEST_CASE("bleu tokenization detaches punctuation") {
  CHECK(bleu_tokenize("Hello, world!") == v({"Hello", ",", "world", "!"}));
  CHECK(bleu_tokenize("  a   b ") == v({"a", "b"}));
  const auto r = corpus_bleu(v({"hi , there"}), v({"hi, there"}));
  CHECK(r.score == 100.0);
}

TEST_CASE("bleu errors") {
  CHECK_THROWS_AS(corpus_bleu(v({"a"}), v({"a", "b"})), DataError);
  CHECK_THROWS_AS(corpus_bleu(std::vector<std::string>{}, std::vector<std::string>{}),
                  DataError);
}

TEST_CASE("bleu stays within range on random text") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> tok(0, 5), len(1, 12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> h(3), r(3);
    for (int i = 0; i < 3; ++i) {
      for (int k = len(rng); k > 0; --k) h[i] += std::string(1, 'a' + tok(rng)) + " ";
      for (int k = len(rng); k > 0; --k) r[i] += std::string(1, 'a' + tok(rng)) + " ";
    }
    const double s = corpus_bleu(h, r).score;
    REQUIRE(s >= 0.0);
    REQUIRE(s <= 100.0);
  }
}

TEST_CASE("length metrics") {
  const auto same = length_metrics(v({"abc", "de"}), v({"xyz", "uv"}));
  CHECK(same.lr == 1.0);
  CHECK(same.lc == 100.0);
  const auto hidden = length_metrics(std::vector<std::string>{repeat('a', 8), repeat('a', 12)},
                                     std::vector<std::string>{repeat('b', 10), repeat('b', 10)});
  CHECK(hidden.lr == doctest::Approx(1.0));
  CHECK(hidden.lc == 0.0);
  const auto edge = length_metrics(
      std::vector<std::string>{repeat('a', 90), repeat('a', 110), repeat('a', 111)},
      std::vector<std::string>{repeat('b', 100), repeat('b', 100), repeat('b', 100)});
  CHECK(edge.lc == doctest::Approx(200.0 / 3));
  CHECK(edge.compliant == std::vector<bool>{true, true, false});
}

TEST_CASE("lcb values") {
  CHECK(std::abs(lcb(48.4, 72.7) - 35.2) <= 0.1);
  CHECK(std::abs(lcb(47.7, 91.5) - 43.6) <= 0.1);
  CHECK(lcb(100, 100) == 100.0);
  CHECK(lcb(46.1, 33.1) == doctest::Approx(15.2591));
  CHECK(std::abs(lcb(46.1, 33.1) - 15.2) <= 0.1);
}

TEST_CASE("he_mt arithmetic") {
  std::vector<AnnotationRecord> recs;
  for (int i = 0; i < 6; ++i) recs.push_back({"a" + std::to_string(i), Rating::kAcceptable, 100, 100});
  for (int i = 0; i < 2; ++i) recs.push_back({"f" + std::to_string(i), Rating::kFixable, 100, 104});
  for (int i = 0; i < 2; ++i) recs.push_back({"w" + std::to_string(i), Rating::kWrong, 100, 100});
  const auto r = he_mt(recs);
  CHECK(r.lc_total[0] == doctest::Approx(60.0));
  CHECK(r.lc_total[1] == doctest::Approx(20.0));
  CHECK(r.score == doctest::Approx(70.0));
  CHECK(r.lc_within[0] == doctest::Approx(100.0));
  CHECK(r.counts == std::array<long, 3>{6, 2, 2});

  auto all_w = recs;
  for (auto& x : all_w) x.rating = Rating::kWrong;
  CHECK(he_mt(all_w).score == 0.0);
  auto a_long = recs;
  for (auto& x : a_long) {
    x.rating = Rating::kAcceptable;
    x.tgt_len = 150;
  }
  CHECK(he_mt(a_long).score == 0.0);
}

TEST_CASE("he_mt bounds on random ratings") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> rating(0, 2), len(1, 60);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<AnnotationRecord> recs(1 + trial % 17);
    for (auto& r : recs) {
      r.rating = static_cast<Rating>(rating(rng));
      r.src_len = len(rng);
      r.tgt_len = len(rng);
    }
    const auto h = he_mt(recs);
    REQUIRE(h.score >= 0.0);
    REQUIRE(h.score <= h.lc_total[0] + h.lc_total[1] + 1e-9);
    REQUIRE(h.lc_total[0] + h.lc_total[1] <= 100.0 + 1e-9);
  }
}

TEST_CASE("ratings csv") {
  const auto recs = read_ratings_csv(ISOMT_TEST_DATA "/ratings_fixture.csv");
  REQUIRE(recs.size() == 10);
  CHECK(he_mt(recs).score == doctest::Approx(70.0));
  const auto bad = std::filesystem::temp_directory_path() / "isomt_bad_ratings.csv";
  std::ofstream(bad) << "segment_id,rating,src_len,tgt_len\nx,Q,1,1\n";
  CHECK_THROWS_AS(read_ratings_csv(bad), DataError);
}

TEST_CASE("evaluate and render") {
  const auto hyp = v({"abc def", "ghij"});
  const auto report = evaluate("sys", hyp, hyp, v({"abc deg", "ghi"}));
  CHECK(report.bleu == 100.0);
  CHECK(report.lcb == doctest::Approx(report.bleu * report.lc / 100.0));
  REQUIRE(report.segments.size() == 2);
  CHECK(report.segments[1].compliant == false);
  CHECK(report.lc == 50.0);
  const std::vector<EvalReport> rs{report};
  CHECK(render_report_text(rs).find("sys") != std::string::npos);
  const auto j = nlohmann::json::parse(render_report_json(rs));
  const bool shaped = j.is_object() || j.is_array();
  CHECK(shaped);
}
