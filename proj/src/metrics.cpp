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

#include "isomt/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "isomt/corpus.hpp"
#include "isomt/error.hpp"
#include "json.hpp"

namespace isomt {
namespace {

using Ngram = std::vector<std::string_view>;

std::map<Ngram, long> count_ngrams(const std::vector<std::string>& tokens,
                                   int n) {
  std::map<Ngram, long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    Ngram g;
    for (int k = 0; k < n; ++k) g.emplace_back(tokens[i + k]);
    ++counts[g];
  }
  return counts;
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }

}  // namespace

std::vector<std::string> bleu_tokenize(std::string_view text) {
  std::string spaced;
  spaced.reserve(text.size() * 2);
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) {
      spaced.push_back(' ');
      spaced.push_back(c);
      spaced.push_back(' ');
    } else {
      spaced.push_back(c);
    }
  }
  std::vector<std::string> tokens;
  std::istringstream ss(spaced);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  return tokens;
}

BleuResult corpus_bleu(std::span<const std::string> hypotheses,
                       std::span<const std::string> references,
                       const BleuOptions& options) {
  if (hypotheses.size() != references.size()) {
    throw DataError("BLEU needs one reference per hypothesis (" +
                    std::to_string(hypotheses.size()) + " vs " +
                    std::to_string(references.size()) + ")");
  }
  if (hypotheses.empty()) throw DataError("BLEU of an empty hypothesis set");
  if (options.max_order < 1 || options.max_order > 4) {
    throw UsageError("BLEU order must lie in [1, 4]");
  }
  BleuResult r;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto hyp = bleu_tokenize(hypotheses[s]);
    const auto ref = bleu_tokenize(references[s]);
    r.hyp_len += static_cast<long>(hyp.size());
    r.ref_len += static_cast<long>(ref.size());
    for (int n = 1; n <= options.max_order; ++n) {
      const auto h = count_ngrams(hyp, n);
      const auto rc = count_ngrams(ref, n);
      for (const auto& [g, c] : h) {
        r.totals[n - 1] += c;
        auto it = rc.find(g);
        if (it != rc.end()) r.matches[n - 1] += std::min(c, it->second);
      }
    }
  }
  if (r.ref_len == 0) throw DataError("BLEU references are all empty");
  double log_sum = 0.0;
  bool zero = r.hyp_len == 0;
  for (int n = 1; n <= options.max_order && !zero; ++n) {
    const long m = r.matches[n - 1];
    const long t = r.totals[n - 1];
    double p;
    if (m > 0) {
      p = static_cast<double>(m) / static_cast<double>(t);
    } else if (options.smooth && n >= 2) {
      p = 1.0 / static_cast<double>(t + 1);
    } else {
      zero = true;
      break;
    }
    r.precisions[n - 1] = p;
    log_sum += std::log(p);
  }
  if (zero) {
    r.score = 0.0;
    r.brevity_penalty = r.hyp_len == 0 ? 0.0 : r.brevity_penalty;
    return r;
  }
  r.brevity_penalty =
      r.hyp_len < r.ref_len
          ? std::exp(1.0 - static_cast<double>(r.ref_len) / r.hyp_len)
          : 1.0;
  r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / options.max_order);
  return r;
}

LengthStats length_metrics(std::span<const std::string> hypotheses,
                           std::span<const std::string> sources) {
  if (hypotheses.size() != sources.size()) {
    throw DataError("length metrics need one source per hypothesis");
  }
  if (hypotheses.empty()) throw DataError("length metrics of an empty set");
  LengthStats out;
  double ratio_sum = 0.0;
  long compliant = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto src_len = char_length(sources[i]);
    if (src_len == 0) {
      throw ZeroSourceLengthError("segment " + std::to_string(i));
    }
    const auto tgt_len = char_length(hypotheses[i]);
    const double ratio = length_ratio(src_len, tgt_len);
    const bool ok = is_length_compliant(src_len, tgt_len);
    out.ratios.push_back(ratio);
    out.compliant.push_back(ok);
    ratio_sum += ratio;
    compliant += ok ? 1 : 0;
  }
  const auto n = static_cast<double>(sources.size());
  out.lr = ratio_sum / n;
  out.lc = 100.0 * static_cast<double>(compliant) / n;
  return out;
}

Rating parse_rating(std::string_view s) {
  if (s == "A") return Rating::kAcceptable;
  if (s == "F") return Rating::kFixable;
  if (s == "W") return Rating::kWrong;
  throw DataError("unknown rating '" + std::string(s) + "' (expected A, F or W)");
}

std::string_view to_string(Rating r) {
  switch (r) {
    case Rating::kAcceptable:
      return "A";
    case Rating::kFixable:
      return "F";
    case Rating::kWrong:
      return "W";
  }
  return "W";
}

HeMtResult he_mt(std::span<const AnnotationRecord> records) {
  if (records.empty()) throw DataError("HE_MT of an empty rating set");
  HeMtResult out;
  std::array<long, 3> compliant{};
  for (const auto& r : records) {
    const auto k = static_cast<std::size_t>(r.rating);
    ++out.counts[k];
    if (is_length_compliant(r.src_len, r.tgt_len)) ++compliant[k];
  }
  const auto total = static_cast<double>(records.size());
  for (std::size_t k = 0; k < 3; ++k) {
    out.lc_total[k] = 100.0 * static_cast<double>(compliant[k]) / total;
    out.lc_within[k] =
        out.counts[k] ? 100.0 * static_cast<double>(compliant[k]) / out.counts[k]
                      : 0.0;
    out.distribution[k] = 100.0 * static_cast<double>(out.counts[k]) / total;
  }
  out.score = out.lc_total[0] + 0.5 * out.lc_total[1];
  return out;
}

std::vector<AnnotationRecord> read_ratings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    return s.substr(b);
  };
  if (!std::getline(in, line) ||
      trim(line) != "segment_id,rating,src_len,tgt_len") {
    throw DataError(path.string() +
                    ":1: expected header segment_id,rating,src_len,tgt_len");
  }
  ++lineno;
  std::vector<AnnotationRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::string col;
    std::istringstream ss(line);
    while (std::getline(ss, col, ',')) cols.push_back(trim(col));
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (cols.size() != 4) throw DataError(where + "expected 4 columns");
    AnnotationRecord r;
    r.segment_id = cols[0];
    try {
      r.rating = parse_rating(cols[1]);
      std::size_t used = 0;
      r.src_len = std::stoul(cols[2], &used);
      if (used != cols[2].size()) throw DataError("bad src_len");
      r.tgt_len = std::stoul(cols[3], &used);
      if (used != cols[3].size()) throw DataError("bad tgt_len");
    } catch (const std::logic_error&) {
      throw DataError(where + "lengths must be nonnegative integers");
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (r.src_len == 0) throw ZeroSourceLengthError(where + "src_len");
    out.push_back(std::move(r));
  }
  return out;
}

EvalReport evaluate(std::string system, std::span<const std::string> hypotheses,
                    std::span<const std::string> references,
                    std::span<const std::string> sources) {
  EvalReport r;
  r.system = std::move(system);
  r.bleu = corpus_bleu(hypotheses, references).score;
  const auto len = length_metrics(hypotheses, sources);
  r.lr = len.lr;
  r.lc = len.lc;
  r.lcb = lcb(r.bleu, r.lc);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    r.segments.push_back({i, char_length(sources[i]), char_length(hypotheses[i]),
                          len.ratios[i], len.compliant[i]});
  }
  return r;
}

std::string render_report_text(std::span<const EvalReport> reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.system.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %7s %6s %6s %6s", static_cast<int>(width),
                "System", "BLEU", "LR", "LC", "LCB");
  out << buf;
  const bool human = std::any_of(reports.begin(), reports.end(),
                                 [](const EvalReport& r) { return r.human.has_value(); });
  if (human) out << "   HE_MT";
  out << '\n';
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%-*s %7.1f %6.2f %6.1f %6.1f",
                  static_cast<int>(width), r.system.c_str(), r.bleu, r.lr, r.lc,
                  r.lcb);
    out << buf;
    if (r.human) {
      std::snprintf(buf, sizeof(buf), " %7.1f", r.human->score);
      out << buf;
    }
    out << '\n';
  }
  for (const auto& r : reports) {
    if (!r.human) continue;
    const auto& h = *r.human;
    out << "\n" << r.system << " human ratings\n";
    std::snprintf(buf, sizeof(buf), "%-8s %6s %8s %10s %11s\n", "Rating", "count",
                  "share", "LC(total)", "LC(within)");
    out << buf;
    for (std::size_t k = 0; k < 3; ++k) {
      std::snprintf(buf, sizeof(buf), "%-8s %6ld %7.1f%% %10.1f %11.1f\n",
                    std::string(to_string(static_cast<Rating>(k))).c_str(),
                    h.counts[k], h.distribution[k], h.lc_total[k], h.lc_within[k]);
      out << buf;
    }
  }
  return out.str();
}

std::string render_report_json(std::span<const EvalReport> reports) {
  nlohmann::ordered_json j;
  j["display_rounding"] = "one decimal (LR two decimals), round half away from zero";
  auto& systems = j["systems"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json s;
    s["system"] = r.system;
    s["bleu"] = r.bleu;
    s["lr"] = r.lr;
    s["lc"] = r.lc;
    s["lcb"] = r.lcb;
    s["display"] = {{"bleu", round1(r.bleu)},
                    {"lr", std::round(r.lr * 100.0) / 100.0},
                    {"lc", round1(r.lc)},
                    {"lcb", round1(r.lcb)}};
    if (r.human) {
      const auto& h = *r.human;
      nlohmann::ordered_json hj;
      hj["he_mt"] = h.score;
      for (std::size_t k = 0; k < 3; ++k) {
        const std::string key(to_string(static_cast<Rating>(k)));
        hj["categories"][key] = {{"count", h.counts[k]},
                                 {"share", h.distribution[k]},
                                 {"lc_total", h.lc_total[k]},
                                 {"lc_within", h.lc_within[k]}};
      }
      s["human"] = hj;
    }
    auto& seg = s["segments"] = nlohmann::ordered_json::array();
    for (const auto& row : r.segments) {
      seg.push_back({{"index", row.index},
                     {"src_len", row.src_len},
                     {"tgt_len", row.tgt_len},
                     {"ratio", row.ratio},
                     {"compliant", row.compliant}});
    }
    systems.push_back(std::move(s));
  }
  return j.dump(2);
}

}  // namespace isomt
