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

#include "isomt/decode.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

#include "isomt/error.hpp"
#include "json.hpp"

namespace isomt {

void DecodeConfig::validate() const {
  if (beam_size < 1) throw UsageError("beam size must be >= 1");
  if (n_best < 1 || n_best > beam_size) {
    throw UsageError("n_best must lie in [1, beam size]");
  }
  if (max_output_len && *max_output_len < 1) {
    throw UsageError("max output length must be >= 1");
  }
}

namespace {

struct Partial {
  std::vector<int> tokens;
  double score;
  int state;
};

bool ranks_before(double sa, const std::vector<int>& a, double sb,
                  const std::vector<int>& b) {
  if (sa != sb) return sa > sb;
  return a < b;
}

}  // namespace

std::vector<ScoredHypothesis> beam_search_ids(
    const ModelParams<double>& params, std::span<const int> src,
    std::span<const int> prefix, std::span<const int> allowed, int beam_size,
    int n_best, int max_output_len) {
  if (beam_size < 1 || n_best < 1 || max_output_len < 1) {
    throw UsageError("beam size, n_best and max length must be >= 1");
  }
  if (prefix.empty() || prefix.front() != Vocabulary::kBos) {
    throw DataError("decoder prefix must start with <bos>");
  }
  const int capacity = static_cast<int>(prefix.size()) + max_output_len;
  if (capacity > params.config.max_len) {
    throw SequenceLengthError("prefix plus max output length " +
                              std::to_string(capacity) + " exceeds max_len " +
                              std::to_string(params.config.max_len));
  }
  IncrementalDecoder<double> decoder(params, src, capacity);
  using State = IncrementalDecoder<double>::State;

  std::vector<State> current(1, decoder.initial_state());
  Mat<double> lp;
  for (int tok : prefix) {
    State* s = &current[0];
    lp = decoder.step(std::span<State* const>(&s, 1), std::span<const int>(&tok, 1));
  }
  std::vector<Partial> alive{{{}, 0.0, 0}};
  std::vector<ScoredHypothesis> finished, truncated;

  struct Candidate {
    int parent;
    int token;
    double score;
  };
  std::vector<Candidate> candidates;
  std::vector<State> next;

  for (int step = 0; step < max_output_len; ++step) {
    candidates.clear();
    for (std::size_t b = 0; b < alive.size(); ++b) {
      for (int w : allowed) {
        candidates.push_back({static_cast<int>(b), w, alive[b].score + lp(b, w)});
      }
    }
    auto before = [&](const Candidate& x, const Candidate& y) {
      if (x.score != y.score) return x.score > y.score;
      const auto& tx = alive[x.parent].tokens;
      const auto& ty = alive[y.parent].tokens;
      if (tx != ty) return tx < ty;
      return x.token < y.token;
    };
    const std::size_t keep =
        std::min(candidates.size(), static_cast<std::size_t>(beam_size));
    std::partial_sort(candidates.begin(), candidates.begin() + keep,
                      candidates.end(), before);

    std::vector<Partial> next_alive;
    next.resize(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = candidates[i];
      std::vector<int> tokens = alive[c.parent].tokens;
      tokens.push_back(c.token);
      if (c.token == Vocabulary::kEos) {
        ScoredHypothesis h;
        h.ids = std::move(tokens);
        h.logprob = c.score;
        finished.push_back(std::move(h));
      } else {
        const int slot = static_cast<int>(next_alive.size());
        decoder.copy_state(current[alive[c.parent].state], next[slot]);
        next_alive.push_back({std::move(tokens), c.score, slot});
      }
    }
    if (next_alive.empty()) {
      alive.clear();
      break;
    }
    if (step + 1 == max_output_len) {
      for (auto& a : next_alive) {
        ScoredHypothesis h;
        h.ids = std::move(a.tokens);
        h.logprob = a.score;
        h.truncated = true;
        truncated.push_back(std::move(h));
      }
      alive.clear();
      break;
    }
    if (static_cast<int>(finished.size()) >= n_best) {
      std::vector<double> fs;
      for (const auto& f : finished) fs.push_back(f.logprob);
      std::nth_element(fs.begin(), fs.begin() + (n_best - 1), fs.end(),
                       std::greater<>());
      double best_alive = -std::numeric_limits<double>::infinity();
      for (const auto& a : next_alive) best_alive = std::max(best_alive, a.score);
      // Extensions can only lower a score, so nothing alive can still enter
      // the n-best finished set.
      if (best_alive < fs[n_best - 1]) {
        alive.clear();
        break;
      }
    }
    std::swap(current, next);
    alive = std::move(next_alive);
    std::vector<State*> ptrs;
    std::vector<int> last;
    for (auto& a : alive) {
      ptrs.push_back(&current[a.state]);
      last.push_back(a.tokens.back());
    }
    lp = decoder.step(ptrs, last);
  }

  auto order = [](const ScoredHypothesis& a, const ScoredHypothesis& b) {
    return ranks_before(a.logprob, a.ids, b.logprob, b.ids);
  };
  std::sort(finished.begin(), finished.end(), order);
  std::sort(truncated.begin(), truncated.end(), order);
  std::vector<ScoredHypothesis> out;
  for (auto* pool : {&finished, &truncated}) {
    for (auto& h : *pool) {
      if (static_cast<int>(out.size()) >= n_best) break;
      out.push_back(std::move(h));
    }
  }
  return out;
}

std::vector<int> output_tokens(const Vocabulary& vocab) {
  std::vector<int> out{Vocabulary::kEos};
  for (int id = vocab.num_reserved(); id < vocab.size(); ++id) out.push_back(id);
  return out;
}

Translator::Translator(const ModelParams<float>& params, const Vocabulary& vocab,
                       TaggingScheme scheme, DirectionTag direction)
    : params_(params.cast<double>()),
      vocab_(vocab),
      scheme_(scheme),
      direction_(std::move(direction)),
      allowed_(output_tokens(vocab)) {
  if (params.vocab_size != vocab.size()) {
    throw DataError("model and vocabulary sizes differ");
  }
}

DecoderInputs Translator::inputs(std::string_view source,
                                 const DecodeConfig& cfg) const {
  const DirectionTag& dir = cfg.direction ? *cfg.direction : direction_;
  if (scheme_ == TaggingScheme::kSourceLengthTag && !cfg.length_tag &&
      !leading_tags(source).empty()) {
    return {vocab_.encode(source), {Vocabulary::kBos}};
  }
  return make_inputs(source, dir, scheme_, cfg.length_tag, vocab_);
}

std::vector<ScoredHypothesis> Translator::beam_search(
    std::string_view source, const DecodeConfig& cfg) const {
  cfg.validate();
  if (char_length(source) == 0) throw DataError("empty source sentence");
  const auto in = inputs(source, cfg);
  int max_len = cfg.max_output_len.value_or(
      2 * static_cast<int>(char_length(source)) + 8);
  max_len = std::min<int>(
      max_len, params_.config.max_len - static_cast<int>(in.prefix.size()));
  auto hyps = beam_search_ids(params_, in.src, in.prefix, allowed_,
                              cfg.beam_size, cfg.n_best, max_len);
  for (auto& h : hyps) {
    h.text = vocab_.decode(h.ids);
    h.tgt_len = char_length(h.text);
  }
  return hyps;
}

ScoredHypothesis Translator::greedy(std::string_view source,
                                    const DecodeConfig& cfg) const {
  if (char_length(source) == 0) throw DataError("empty source sentence");
  const auto in = inputs(source, cfg);
  int max_len = cfg.max_output_len.value_or(
      2 * static_cast<int>(char_length(source)) + 8);
  max_len = std::min<int>(
      max_len, params_.config.max_len - static_cast<int>(in.prefix.size()));
  IncrementalDecoder<double> decoder(
      params_, in.src, static_cast<int>(in.prefix.size()) + max_len);
  auto state = decoder.initial_state();
  auto* ptr = &state;
  Mat<double> lp;
  for (int tok : in.prefix) {
    lp = decoder.step(std::span<decltype(ptr) const>(&ptr, 1),
                      std::span<const int>(&tok, 1));
  }
  ScoredHypothesis h;
  h.truncated = true;
  for (int step = 0; step < max_len; ++step) {
    int best = allowed_.front();
    for (int w : allowed_) {
      if (lp(0, w) > lp(0, best) || (lp(0, w) == lp(0, best) && w < best)) {
        best = w;
      }
    }
    h.logprob += lp(0, best);
    h.ids.push_back(best);
    if (best == Vocabulary::kEos) {
      h.truncated = false;
      break;
    }
    if (step + 1 < max_len) {
      lp = decoder.step(std::span<decltype(ptr) const>(&ptr, 1),
                        std::span<const int>(&best, 1));
    }
  }
  h.text = vocab_.decode(h.ids);
  h.tgt_len = char_length(h.text);
  return h;
}

double Translator::score(std::string_view source, std::string_view target,
                         const DecodeConfig& cfg) const {
  const auto in = inputs(source, cfg);
  const auto ids = vocab_.encode(strip_tags(target));
  return sequence_logprob(params_, in.src, ids, in.prefix);
}

namespace {

template <typename Out, typename Fn>
std::vector<Out> parallel_map(std::size_t n, int jobs, Fn fn) {
  std::vector<Out> out(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(jobs, n));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work, w, workers);
    for (auto& t : threads) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw DataError("sentence " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> translate_corpus(const Translator& translator,
                                          std::span<const std::string> sources,
                                          const DecodeConfig& cfg, int jobs) {
  cfg.validate();
  return parallel_map<std::string>(sources.size(), jobs, [&](std::size_t i) {
    DecodeConfig one = cfg;
    one.n_best = 1;
    auto hyps = translator.beam_search(sources[i], one);
    return hyps.empty() ? std::string() : hyps.front().text;
  });
}

std::vector<NBestList> nbest_corpus(const Translator& translator,
                                    std::span<const std::string> sources,
                                    const DecodeConfig& cfg, int jobs) {
  cfg.validate();
  return parallel_map<NBestList>(sources.size(), jobs, [&](std::size_t i) {
    return NBestList{strip_tags(sources[i]),
                     translator.beam_search(sources[i], cfg)};
  });
}

void write_nbest_jsonl(const std::filesystem::path& path,
                       std::span<const NBestList> lists) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& list : lists) {
    nlohmann::ordered_json j;
    j["source"] = list.source;
    auto& arr = j["nbest"] = nlohmann::ordered_json::array();
    int rank = 0;
    for (const auto& h : list.hypotheses) {
      nlohmann::ordered_json e;
      e["text"] = h.text;
      e["logprob"] = h.logprob;
      e["tgt_len"] = h.tgt_len;
      if (h.truncated) e["truncated"] = true;
      if (!std::isnan(h.s_p)) {
        e["s_p"] = h.s_p;
        e["s_d"] = h.s_d;
        e["rank"] = rank;
      }
      ++rank;
      arr.push_back(std::move(e));
    }
    out << j.dump() << '\n';
  }
}

std::vector<NBestList> read_nbest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<NBestList> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      NBestList list;
      list.source = j.at("source").get<std::string>();
      for (const auto& e : j.at("nbest")) {
        ScoredHypothesis h;
        h.text = e.at("text").get<std::string>();
        h.logprob = e.at("logprob").get<double>();
        h.tgt_len = e.contains("tgt_len") ? e.at("tgt_len").get<std::size_t>()
                                          : char_length(h.text);
        h.truncated = e.value("truncated", false);
        if (e.contains("s_p")) h.s_p = e.at("s_p").get<double>();
        if (e.contains("s_d")) h.s_d = e.at("s_d").get<double>();
        list.hypotheses.push_back(std::move(h));
      }
      out.push_back(std::move(list));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed N-best entry: " + e.what());
    }
  }
  return out;
}

}  // namespace isomt
