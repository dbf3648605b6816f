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

#include <string>
#include <string_view>
#include <vector>

#include "isomt/corpus.hpp"
#include "isomt/decode.hpp"
#include "isomt/model.hpp"
#include "isomt/tokenizer.hpp"
#include "isomt/train.hpp"

namespace isomt {

enum class SelfLearnMode { kOffline, kOnline };
enum class MergeMode { kUnion, kFilter };
enum class RegenerationSchedule { kPerEpoch, kEveryKSteps, kNever };

std::string_view to_string(SelfLearnMode m);
std::string_view to_string(MergeMode m);
std::string_view to_string(RegenerationSchedule s);
SelfLearnMode parse_selflearn_mode(std::string_view s);
MergeMode parse_merge_mode(std::string_view s);
RegenerationSchedule parse_schedule(std::string_view s);

struct SelfLearnConfig {
  SelfLearnMode mode = SelfLearnMode::kOnline;
  MergeMode merge = MergeMode::kFilter;
  LengthClass pseudo_tag = LengthClass::kLong;
  int pseudo_beam = 5;
  RegenerationSchedule schedule = RegenerationSchedule::kPerEpoch;
  long regenerate_every_steps = 0;  // for kEveryKSteps
  int finetune_epochs = 5;
  // Online only: also synthesize pseudo targets from real sources, decoded
  // with the opposite length tag.
  bool pseudo_both_directions = false;
  int jobs = 1;

  void validate() const;
};

struct PseudoBitext {
  Corpus corpus;
  std::vector<std::string> skipped;  // one entry per dropped pair
};

// Decodes a pseudo-source from every target of `original` with the pseudo
// tag requested. `reverse` must translate target -> source: a dedicated
// reverse model, or a bidirectional model (the direction is set here).
PseudoBitext generate_pseudo_bitext(const Translator& reverse,
                                    const Corpus& original,
                                    const SelfLearnConfig& cfg);

// Union keeps everything; filter drops pseudo pairs with LR(t/s') > 1.05.
// Original pairs are never filtered.
Corpus merge_corpora(const Corpus& original, const Corpus& pseudo,
                     MergeMode mode);

struct RegenerationReport {
  int epoch = 0;
  long step = 0;
  std::size_t pseudo_pairs = 0;
  std::size_t skipped = 0;
  std::size_t merged_pairs = 0;
  ClassHistogram pseudo_histogram{};
  double mean_pseudo_lr = 0.0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct SelfLearnReport {
  SelfLearnConfig config;
  std::size_t original_pairs = 0;
  std::vector<RegenerationReport> rounds;
  int best_epoch = 0;
  double best_valid_loss = 0.0;
};

std::string report_json(const SelfLearnReport& report);

struct SelfLearnResult {
  ModelParams<float> params;
  SelfLearnReport report;
  Corpus last_merged;
  TrainLog log;
};

// Generates D' with the frozen reverse model, merges it with D and
// fine-tunes the forward model (length-tagged) on the result.
SelfLearnResult offline_self_learning(const ModelParams<float>& forward,
                                      const ModelParams<float>& reverse,
                                      const Vocabulary& vocab,
                                      const Corpus& original,
                                      const Corpus& valid,
                                      const SelfLearnConfig& cfg,
                                      const TrainConfig& train_cfg);

// Bidirectional fine-tuning where D' is regenerated from the current
// parameters on the configured schedule.
SelfLearnResult online_self_learning(const ModelParams<float>& bidirectional,
                                     const Vocabulary& vocab,
                                     const Corpus& original,
                                     const Corpus& valid,
                                     const SelfLearnConfig& cfg,
                                     const TrainConfig& train_cfg);

}  // namespace isomt
