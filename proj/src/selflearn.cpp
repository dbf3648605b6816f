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

#include "isomt/selflearn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "isomt/error.hpp"
#include "json.hpp"

namespace isomt {

std::string_view to_string(SelfLearnMode m) {
  return m == SelfLearnMode::kOffline ? "offline" : "online";
}

std::string_view to_string(MergeMode m) {
  return m == MergeMode::kUnion ? "union" : "filter";
}

std::string_view to_string(RegenerationSchedule s) {
  switch (s) {
    case RegenerationSchedule::kPerEpoch:
      return "per-epoch";
    case RegenerationSchedule::kEveryKSteps:
      return "every-k-steps";
    case RegenerationSchedule::kNever:
      return "never";
  }
  return "per-epoch";
}

SelfLearnMode parse_selflearn_mode(std::string_view s) {
  if (s == "offline") return SelfLearnMode::kOffline;
  if (s == "online") return SelfLearnMode::kOnline;
  throw UsageError("unknown self-learning mode '" + std::string(s) + "'");
}

MergeMode parse_merge_mode(std::string_view s) {
  if (s == "union") return MergeMode::kUnion;
  if (s == "filter") return MergeMode::kFilter;
  throw UsageError("unknown merge mode '" + std::string(s) + "'");
}

RegenerationSchedule parse_schedule(std::string_view s) {
  if (s == "per-epoch") return RegenerationSchedule::kPerEpoch;
  if (s == "every-k-steps") return RegenerationSchedule::kEveryKSteps;
  if (s == "never") return RegenerationSchedule::kNever;
  throw UsageError("unknown regeneration schedule '" + std::string(s) + "'");
}

void SelfLearnConfig::validate() const {
  if (pseudo_beam < 1) throw UsageError("pseudo-generation beam must be >= 1");
  if (finetune_epochs < 1) throw UsageError("fine-tune epochs must be >= 1");
  if (schedule == RegenerationSchedule::kEveryKSteps &&
      regenerate_every_steps < 1) {
    throw UsageError("every-k-steps schedule needs k >= 1");
  }
}

namespace {

LengthClass opposite(LengthClass v) {
  switch (v) {
    case LengthClass::kShort:
      return LengthClass::kLong;
    case LengthClass::kLong:
      return LengthClass::kShort;
    case LengthClass::kNormal:
      return LengthClass::kNormal;
  }
  return v;
}

double mean_lr(const Corpus& c) {
  if (c.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : c.pairs) sum += p.lr();
  return sum / static_cast<double>(c.size());
}

RegenerationReport describe(const PseudoBitext& pseudo, const Corpus& merged) {
  RegenerationReport r;
  r.pseudo_pairs = pseudo.corpus.size();
  r.skipped = pseudo.skipped.size();
  r.merged_pairs = merged.size();
  if (!pseudo.corpus.empty()) r.pseudo_histogram = class_histogram(pseudo.corpus);
  r.mean_pseudo_lr = mean_lr(pseudo.corpus);
  return r;
}

// Decodes `sources_from` (one side of each pair) and pairs the output with the
// other side. When `pseudo_is_source` the output becomes the pseudo source.
void decode_side(const Translator& translator, const Corpus& original,
                 const DecodeConfig& dc, bool pseudo_is_source, int jobs,
                 PseudoBitext& out) {
  std::vector<std::string> inputs;
  inputs.reserve(original.size());
  for (const auto& p : original.pairs) {
    inputs.push_back(pseudo_is_source ? p.target() : p.source());
  }
  std::vector<std::vector<ScoredHypothesis>> hyps(inputs.size());
  std::vector<std::string> errors(inputs.size());
  // Per-sentence failures are recorded, never rethrown.
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        hyps[i] = translator.beam_search(inputs[i], dc);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(inputs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& p = original.pairs[i];
    std::string reason = errors[i];
    if (reason.empty()) {
      if (hyps[i].empty()) {
        reason = "no hypothesis";
      } else if (hyps[i].front().truncated) {
        reason = "hypothesis hit the length limit";
      } else if (hyps[i].front().tgt_len == 0) {
        reason = "empty hypothesis";
      }
    }
    if (!reason.empty()) {
      out.skipped.push_back("pair " + std::to_string(i) + ": " + reason);
      continue;
    }
    const auto& text = hyps[i].front().text;
    if (pseudo_is_source) {
      out.corpus.pairs.emplace_back(text, p.target(), Provenance::kPseudo);
    } else {
      out.corpus.pairs.emplace_back(p.source(), text, Provenance::kPseudo);
    }
  }
}

}  // namespace

PseudoBitext generate_pseudo_bitext(const Translator& reverse,
                                    const Corpus& original,
                                    const SelfLearnConfig& cfg) {
  cfg.validate();
  PseudoBitext out;
  out.corpus.direction = original.direction;
  DecodeConfig dc;
  dc.beam_size = cfg.pseudo_beam;
  dc.n_best = 1;
  dc.length_tag = cfg.pseudo_tag;
  dc.direction = original.direction.reversed();
  decode_side(reverse, original, dc, true, cfg.jobs, out);
  if (cfg.pseudo_both_directions) {
    if (reverse.scheme() != TaggingScheme::kBidirectional) {
      throw UsageError("pseudo data in both directions needs a bidirectional model");
    }
    DecodeConfig fwd = dc;
    fwd.length_tag = opposite(cfg.pseudo_tag);
    fwd.direction = original.direction;
    decode_side(reverse, original, fwd, false, cfg.jobs, out);
  }
  return out;
}

Corpus merge_corpora(const Corpus& original, const Corpus& pseudo,
                     MergeMode mode) {
  if (!pseudo.empty() && !(pseudo.direction.src_lang == original.direction.src_lang &&
                           pseudo.direction.tgt_lang == original.direction.tgt_lang)) {
    throw DataError("pseudo and original corpora have different directions");
  }
  Corpus merged;
  merged.direction = original.direction;
  merged.pairs = original.pairs;
  for (const auto& p : pseudo.pairs) {
    if (mode == MergeMode::kFilter && p.length_class() == LengthClass::kLong) {
      continue;
    }
    merged.pairs.push_back(p);
  }
  return merged;
}

std::string report_json(const SelfLearnReport& report) {
  nlohmann::ordered_json j;
  const auto& c = report.config;
  j["config"] = {{"mode", to_string(c.mode)},
                 {"merge", to_string(c.merge)},
                 {"pseudo_tag", to_string(c.pseudo_tag)},
                 {"pseudo_beam", c.pseudo_beam},
                 {"schedule", to_string(c.schedule)},
                 {"regenerate_every_steps", c.regenerate_every_steps},
                 {"finetune_epochs", c.finetune_epochs},
                 {"pseudo_both_directions", c.pseudo_both_directions}};
  j["original_pairs"] = report.original_pairs;
  j["best_epoch"] = report.best_epoch;
  j["best_valid_loss"] = report.best_valid_loss;
  auto& rounds = j["rounds"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rounds) {
    nlohmann::ordered_json row;
    row["epoch"] = r.epoch;
    row["step"] = r.step;
    row["pseudo_pairs"] = r.pseudo_pairs;
    row["skipped"] = r.skipped;
    row["merged_pairs"] = r.merged_pairs;
    row["pseudo_histogram"] = {{"short", r.pseudo_histogram[0]},
                               {"normal", r.pseudo_histogram[1]},
                               {"long", r.pseudo_histogram[2]}};
    row["mean_pseudo_lr"] = r.mean_pseudo_lr;
    row["train_loss"] = r.train_loss;
    row["valid_loss"] = r.valid_loss;
    rounds.push_back(std::move(row));
  }
  return j.dump(2);
}

SelfLearnResult offline_self_learning(const ModelParams<float>& forward,
                                      const ModelParams<float>& reverse,
                                      const Vocabulary& vocab,
                                      const Corpus& original,
                                      const Corpus& valid,
                                      const SelfLearnConfig& cfg,
                                      const TrainConfig& train_cfg) {
  cfg.validate();
  if (original.empty()) throw DataError("self-learning on an empty corpus");
  const Translator reverse_translator(reverse, vocab, TaggingScheme::kSourceLengthTag,
                                      original.direction.reversed());
  const auto pseudo = generate_pseudo_bitext(reverse_translator, original, cfg);
  Corpus merged = merge_corpora(original, pseudo.corpus, cfg.merge);

  TrainConfig tc = train_cfg;
  tc.max_epochs = cfg.finetune_epochs;
  TrainResult tr = train(forward, merged, valid, tc,
                         TaggingScheme::kSourceLengthTag, vocab);

  SelfLearnResult out{std::move(tr.params), {}, std::move(merged), tr.log};
  out.report.config = cfg;
  out.report.original_pairs = original.size();
  auto round = describe(pseudo, out.last_merged);
  round.epoch = 0;
  round.train_loss = tr.log.epochs.empty() ? 0.0 : tr.log.epochs.back().train_loss;
  round.valid_loss = tr.log.best_valid_loss;
  out.report.rounds.push_back(round);
  out.report.best_epoch = tr.log.best_epoch;
  out.report.best_valid_loss = tr.log.best_valid_loss;
  return out;
}

SelfLearnResult online_self_learning(const ModelParams<float>& bidirectional,
                                     const Vocabulary& vocab,
                                     const Corpus& original,
                                     const Corpus& valid,
                                     const SelfLearnConfig& cfg,
                                     const TrainConfig& train_cfg) {
  cfg.validate();
  if (original.empty()) throw DataError("self-learning on an empty corpus");
  Trainer trainer(bidirectional, train_cfg, TaggingScheme::kBidirectional, vocab);
  SelfLearnResult out{bidirectional, {}, original, {}};
  out.report.config = cfg;
  out.report.original_pairs = original.size();

  auto regenerate = [&](RegenerationReport& round) {
    PseudoBitext pseudo;
    pseudo.corpus.direction = original.direction;
    if (cfg.schedule != RegenerationSchedule::kNever) {
      const Translator translator(trainer.params(), vocab,
                                  TaggingScheme::kBidirectional,
                                  original.direction);
      pseudo = generate_pseudo_bitext(translator, original, cfg);
    }
    Corpus merged = merge_corpora(original, pseudo.corpus, cfg.merge);
    const int epoch = round.epoch;
    const long step = trainer.steps();
    round = describe(pseudo, merged);
    round.epoch = epoch;
    round.step = step;
    return merged;
  };

  bool have_best = false;
  const long steps_per_epoch =
      static_cast<long>((2 * original.size() + train_cfg.batch_size - 1) /
                        train_cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.finetune_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    if (cfg.schedule == RegenerationSchedule::kEveryKSteps) {
      long done = 0;
      double loss_sum = 0.0;
      long chunks = 0;
      while (done < steps_per_epoch) {
        const long k = std::min(cfg.regenerate_every_steps, steps_per_epoch - done);
        RegenerationReport round;
        round.epoch = epoch;
        out.last_merged = regenerate(round);
        const auto examples =
            make_examples(out.last_merged, TaggingScheme::kBidirectional, vocab);
        round.train_loss = trainer.run_steps(examples, k);
        loss_sum += round.train_loss;
        ++chunks;
        done += k;
        round.valid_loss = trainer.validate(valid).all.mean_loss();
        out.report.rounds.push_back(round);
      }
      log.train_loss = loss_sum / static_cast<double>(chunks);
    } else {
      RegenerationReport round;
      round.epoch = epoch;
      if (cfg.schedule == RegenerationSchedule::kPerEpoch || epoch == 1) {
        out.last_merged = regenerate(round);
      } else {
        round.merged_pairs = out.last_merged.size();
        round.step = trainer.steps();
      }
      const auto examples =
          make_examples(out.last_merged, TaggingScheme::kBidirectional, vocab);
      log.train_loss = trainer.run_epoch(examples);
      round.train_loss = log.train_loss;
      out.report.rounds.push_back(round);
    }
    const auto v = trainer.validate(valid);
    log.steps = trainer.steps();
    log.learning_rate = trainer.current_learning_rate();
    log.valid_loss = v.all.mean_loss();
    log.valid_accuracy = v.all.accuracy();
    log.valid_loss_forward = v.forward.mean_loss();
    log.valid_loss_reverse = v.reverse.mean_loss();
    if (cfg.schedule != RegenerationSchedule::kEveryKSteps) {
      out.report.rounds.back().valid_loss = log.valid_loss;
    }
    if (!std::isfinite(log.valid_loss)) {
      throw NumericError("non-finite validation loss in online self-learning");
    }
    out.log.epochs.push_back(log);
    if (!have_best || log.valid_loss < out.log.best_valid_loss) {
      have_best = true;
      out.log.best_valid_loss = log.valid_loss;
      out.log.best_epoch = epoch;
      out.params = trainer.params();
    }
  }
  out.report.best_epoch = out.log.best_epoch;
  out.report.best_valid_loss = out.log.best_valid_loss;
  return out;
}

}  // namespace isomt
