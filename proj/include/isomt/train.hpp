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

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "isomt/corpus.hpp"
#include "isomt/model.hpp"
#include "isomt/tokenizer.hpp"

namespace isomt {

// How control tokens are attached to a pair.
//  kNone            plain source -> target
//  kSourceLengthTag "<v:class> source" -> target
//  kBidirectional   "<l:src> source" -> "<lv:tgt:class>" target, and the
//                   reverse pair, sharing all parameters
enum class TaggingScheme { kNone, kSourceLengthTag, kBidirectional };

std::string_view to_string(TaggingScheme s);
TaggingScheme parse_tagging_scheme(std::string_view s);

struct TrainConfig {
  double learning_rate = 3e-4;
  int warmup_steps = 200;
  int batch_size = 16;
  int max_epochs = 30;
  int finetune_epochs = 5;
  std::uint64_t seed = 1;
  double label_smoothing = 0.0;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  // Stop once validation token accuracy reaches this value (<= 0 disables).
  double target_valid_accuracy = 0.0;
  std::vector<std::string> frozen;  // tensor names excluded from updates

  static TrainConfig desk() { return {}; }
  // Initial learning rate 1e-7 and 5 fine-tuning epochs.
  static TrainConfig full() {
    TrainConfig c;
    c.learning_rate = 1e-7;
    c.warmup_steps = 0;
    return c;
  }

  void validate() const;
};

// Example for the direction stored in the corpus. `tag` overrides the class
// derived from the pair (used at inference time to request a class).
Example make_tagged_example(const BitextPair& pair, const DirectionTag& direction,
                            TaggingScheme scheme, const Vocabulary& vocab);

// Encoder input and forced decoder prefix for translating `source`.
struct DecoderInputs {
  std::vector<int> src;
  std::vector<int> prefix;
};
DecoderInputs make_inputs(std::string_view source, const DirectionTag& direction,
                          TaggingScheme scheme,
                          std::optional<LengthClass> length_class,
                          const Vocabulary& vocab);

// Forward examples for the corpus; in bidirectional mode each pair also
// contributes its reverse.
std::vector<Example> make_examples(const Corpus& corpus, TaggingScheme scheme,
                                   const Vocabulary& vocab);

struct EpochLog {
  int epoch = 0;
  long steps = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_accuracy = 0.0;
  // Bidirectional runs also split validation by direction.
  double valid_loss_forward = 0.0;
  double valid_loss_reverse = 0.0;
  double learning_rate = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_valid_loss = 0.0;
};

struct ValidationStats {
  LossStats all, forward, reverse;
};

// Owns parameters and optimizer state between epochs.
class Trainer {
 public:
  Trainer(ModelParams<float> params, TrainConfig config, TaggingScheme scheme,
          const Vocabulary& vocab);

  // One pass over the examples in a seeded shuffled order.
  double run_epoch(const std::vector<Example>& examples);
  // `steps` optimizer steps drawn from a cyclic shuffled stream.
  double run_steps(const std::vector<Example>& examples, long steps);

  ValidationStats validate(const Corpus& valid) const;

  const ModelParams<float>& params() const { return params_; }
  ModelParams<float>& mutable_params() { return params_; }
  long steps() const { return step_; }
  double current_learning_rate() const;

 private:
  double update(std::span<const Example> batch);

  ModelParams<float> params_;
  TrainConfig config_;
  TaggingScheme scheme_;
  const Vocabulary& vocab_;
  std::vector<int> frozen_;
  Gradients<float> grads_;
  Gradients<float> m_;
  Gradients<float> v_;
  long step_ = 0;
  std::mt19937_64 rng_;
  std::vector<std::size_t> stream_order_;
  std::size_t stream_pos_ = 0;
};

struct TrainResult {
  ModelParams<float> params;  // lowest validation loss checkpoint
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Maximizes likelihood on `train` for cfg.max_epochs epochs.
TrainResult train(ModelParams<float> params, const Corpus& train,
                  const Corpus& valid, const TrainConfig& cfg,
                  TaggingScheme scheme, const Vocabulary& vocab,
                  const EpochCallback& on_epoch = {});

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  struct Entry {
    std::string tensor;
    double max_relative_error;
    int coordinates;
  };
  std::vector<Entry> per_tensor;
};

// Compares analytic gradients with central finite differences on
// `samples_per_tensor` random coordinates of each named tensor (all tensors
// when empty). Relative error is |a - n| / max(|a|, |n|, 1e-6). Throws
// NumericError naming the tensor when `tolerance` is exceeded.
GradientCheckReport gradient_check(const ModelParams<double>& params,
                                   std::span<const Example> batch,
                                   const std::vector<std::string>& tensors = {},
                                   int samples_per_tensor = 6,
                                   double step = 1e-5, double tolerance = 1e-4,
                                   std::uint64_t seed = 7);

}  // namespace isomt
