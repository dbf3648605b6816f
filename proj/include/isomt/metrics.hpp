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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace isomt {

struct BleuOptions {
  bool smooth = true;  // add-one for n >= 2 when the match count is zero
  int max_order = 4;
};

struct BleuResult {
  double score = 0.0;  // 0-100
  double brevity_penalty = 1.0;
  std::array<double, 4> precisions{};
  std::array<long, 4> matches{};
  std::array<long, 4> totals{};
  long hyp_len = 0;
  long ref_len = 0;
};

// Splits ASCII punctuation from neighbouring characters, then on whitespace.
std::vector<std::string> bleu_tokenize(std::string_view text);

// Corpus BLEU with one reference per segment.
BleuResult corpus_bleu(std::span<const std::string> hypotheses,
                       std::span<const std::string> references,
                       const BleuOptions& options = {});

struct LengthStats {
  double lr = 0.0;  // mean of per-segment tgt/src ratios
  double lc = 0.0;  // percentage of compliant segments
  std::vector<double> ratios;
  std::vector<bool> compliant;
};

LengthStats length_metrics(std::span<const std::string> hypotheses,
                           std::span<const std::string> sources);

inline double lcb(double bleu, double lc) { return bleu * lc / 100.0; }

enum class Rating { kAcceptable = 0, kFixable = 1, kWrong = 2 };
Rating parse_rating(std::string_view s);
std::string_view to_string(Rating r);

struct AnnotationRecord {
  std::string segment_id;
  Rating rating = Rating::kWrong;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
};

struct HeMtResult {
  double score = 0.0;
  // LC(X) with all rated segments as denominator (used for the score).
  std::array<double, 3> lc_total{};
  // LC(X) normalized by the number of segments rated X.
  std::array<double, 3> lc_within{};
  std::array<double, 3> distribution{};  // % of segments per rating
  std::array<long, 3> counts{};
};

// HE_MT = LC(A) + 0.5 LC(F).
HeMtResult he_mt(std::span<const AnnotationRecord> records);

// CSV with header "segment_id,rating,src_len,tgt_len".
std::vector<AnnotationRecord> read_ratings_csv(const std::filesystem::path& path);

struct SegmentRow {
  std::size_t index;
  std::size_t src_len;
  std::size_t tgt_len;
  double ratio;
  bool compliant;
};

struct EvalReport {
  std::string system;
  double bleu = 0.0;
  double lr = 0.0;
  double lc = 0.0;
  double lcb = 0.0;
  std::vector<SegmentRow> segments;
  std::optional<HeMtResult> human;
};

EvalReport evaluate(std::string system, std::span<const std::string> hypotheses,
                    std::span<const std::string> references,
                    std::span<const std::string> sources);

// Aligned text table (one decimal) in the layout of the results tables.
std::string render_report_text(std::span<const EvalReport> reports);
// Full-precision JSON plus the rounded display values.
std::string render_report_json(std::span<const EvalReport> reports);

}  // namespace isomt
