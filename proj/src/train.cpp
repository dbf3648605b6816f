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

#include "isomt/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "isomt/error.hpp"

namespace isomt {

std::string_view to_string(TaggingScheme s) {
  switch (s) {
    case TaggingScheme::kNone:
      return "none";
    case TaggingScheme::kSourceLengthTag:
      return "length";
    case TaggingScheme::kBidirectional:
      return "bidirectional";
  }
  return "none";
}

TaggingScheme parse_tagging_scheme(std::string_view s) {
  if (s == "none") return TaggingScheme::kNone;
  if (s == "length") return TaggingScheme::kSourceLengthTag;
  if (s == "bidirectional" || s == "bidir") return TaggingScheme::kBidirectional;
  throw UsageError("unknown tagging scheme '" + std::string(s) +
                   "' (expected none, length or bidirectional)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be > 0");
  if (max_epochs < 1 || finetune_epochs < 1) {
    throw UsageError("epochs must be >= 1");
  }
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  if (warmup_steps < 0) throw UsageError("warmup steps must be >= 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw UsageError("label smoothing must lie in [0, 1)");
  }
}

namespace {

int required_id(const Vocabulary& vocab, const std::string& token) {
  const int id = vocab.id(token);
  if (id < 0) {
    throw DataError("vocabulary lacks control token " + token);
  }
  return id;
}

}  // namespace

DecoderInputs make_inputs(std::string_view source, const DirectionTag& direction,
                          TaggingScheme scheme,
                          std::optional<LengthClass> length_class,
                          const Vocabulary& vocab) {
  DecoderInputs in;
  in.prefix = {Vocabulary::kBos};
  std::string body = strip_tags(source);
  switch (scheme) {
    case TaggingScheme::kNone:
      in.src = vocab.encode(body);
      break;
    case TaggingScheme::kSourceLengthTag:
      if (length_class) {
        required_id(vocab, length_tag_token(*length_class));
        in.src = vocab.encode(prepend_length_tag(body, *length_class));
      } else {
        in.src = vocab.encode(body);
      }
      break;
    case TaggingScheme::kBidirectional: {
      validate(direction);
      required_id(vocab, language_token(direction.src_lang));
      in.src = vocab.encode(prepend_tag(body, language_token(direction.src_lang)));
      in.prefix.push_back(required_id(
          vocab, language_length_token(direction.tgt_lang,
                                       length_class.value_or(LengthClass::kNormal))));
      break;
    }
  }
  return in;
}

Example make_tagged_example(const BitextPair& pair, const DirectionTag& direction,
                            TaggingScheme scheme, const Vocabulary& vocab) {
  auto in = make_inputs(pair.source(), direction, scheme, pair.length_class(),
                        vocab);
  return make_example(std::move(in.src), std::move(in.prefix),
                      vocab.encode(strip_tags(pair.target())));
}

std::vector<Example> make_examples(const Corpus& corpus, TaggingScheme scheme,
                                   const Vocabulary& vocab) {
  std::vector<Example> out;
  out.reserve(corpus.size() * (scheme == TaggingScheme::kBidirectional ? 2 : 1));
  for (const auto& p : corpus.pairs) {
    out.push_back(make_tagged_example(p, corpus.direction, scheme, vocab));
  }
  if (scheme == TaggingScheme::kBidirectional) {
    const auto rev = corpus.direction.reversed();
    for (const auto& p : corpus.pairs) {
      out.push_back(make_tagged_example(p.reversed(), rev, scheme, vocab));
    }
  }
  return out;
}

Trainer::Trainer(ModelParams<float> params, TrainConfig config,
                 TaggingScheme scheme, const Vocabulary& vocab)
    : params_(std::move(params)),
      config_(std::move(config)),
      scheme_(scheme),
      vocab_(vocab),
      rng_(config_.seed) {
  config_.validate();
  if (params_.vocab_size != vocab_.size()) {
    throw DataError("model vocabulary size " +
                    std::to_string(params_.vocab_size) +
                    " differs from vocabulary size " +
                    std::to_string(vocab_.size()));
  }
  for (const auto& name : config_.frozen) {
    const int ix = params_.index_of(name);
    if (ix < 0) throw UsageError("unknown tensor to freeze: " + name);
    frozen_.push_back(ix);
  }
  grads_ = zeros_like(params_);
  m_ = zeros_like(params_);
  v_ = zeros_like(params_);
}

double Trainer::current_learning_rate() const {
  const double warm =
      config_.warmup_steps > 0
          ? std::min(1.0, static_cast<double>(step_ + 1) / config_.warmup_steps)
          : 1.0;
  return config_.learning_rate * warm;
}

double Trainer::update(std::span<const Example> batch) {
  for (auto& g : grads_) g.setZero();
  ForwardOptions opt;
  opt.dropout = params_.config.dropout;
  opt.label_smoothing = config_.label_smoothing;
  opt.rng = &rng_;
  opt.frozen = frozen_;
  const LossStats stats = forward_backward(params_, batch, &grads_, opt);

  double norm2 = 0.0;
  for (const auto& g : grads_) norm2 += g.cast<double>().squaredNorm();
  if (!std::isfinite(norm2)) {
    throw NumericError("non-finite gradient at step " + std::to_string(step_));
  }
  float clip = 1.0f;
  if (config_.grad_clip > 0.0 && std::sqrt(norm2) > config_.grad_clip) {
    clip = static_cast<float>(config_.grad_clip / std::sqrt(norm2));
  }

  const double lr = current_learning_rate();
  ++step_;
  const double b1 = config_.adam_beta1;
  const double b2 = config_.adam_beta2;
  const float c1 = static_cast<float>(1.0 - std::pow(b1, step_));
  const float c2 = static_cast<float>(1.0 - std::pow(b2, step_));
  const float eps = static_cast<float>(config_.adam_eps);
  const float flr = static_cast<float>(lr);
  for (std::size_t i = 0; i < params_.tensors.size(); ++i) {
    if (std::find(frozen_.begin(), frozen_.end(), static_cast<int>(i)) !=
        frozen_.end()) {
      continue;
    }
    auto g = grads_[i].array() * clip;
    m_[i].array() = static_cast<float>(b1) * m_[i].array() +
                    static_cast<float>(1.0 - b1) * g;
    v_[i].array() = static_cast<float>(b2) * v_[i].array() +
                    static_cast<float>(1.0 - b2) * g.square();
    params_.tensors[i].array() -=
        flr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    if (!params_.tensors[i].allFinite()) {
      throw NumericError("tensor " + params_.names[i] +
                         " became non-finite at step " + std::to_string(step_) +
                         " (loss " + std::to_string(stats.mean_loss()) + ")");
    }
  }
  return stats.loss_sum;
}

double Trainer::run_epoch(const std::vector<Example>& examples) {
  if (examples.empty()) throw DataError("cannot train on an empty corpus");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  double loss_sum = 0.0;
  long tokens = 0;
  std::vector<Example> batch;
  for (std::size_t start = 0; start < order.size();
       start += config_.batch_size) {
    batch.clear();
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(config_.batch_size));
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(examples[order[i]]);
      for (auto m : examples[order[i]].loss_mask) tokens += m;
    }
    loss_sum += update(batch);
  }
  return loss_sum / static_cast<double>(tokens);
}

double Trainer::run_steps(const std::vector<Example>& examples, long steps) {
  if (examples.empty()) throw DataError("cannot train on an empty corpus");
  if (stream_order_.size() != examples.size()) {
    stream_order_.resize(examples.size());
    stream_pos_ = stream_order_.size();
  }
  double loss_sum = 0.0;
  long tokens = 0;
  std::vector<Example> batch;
  for (long s = 0; s < steps; ++s) {
    batch.clear();
    for (int b = 0; b < config_.batch_size; ++b) {
      if (stream_pos_ >= stream_order_.size()) {
        std::iota(stream_order_.begin(), stream_order_.end(), 0);
        std::shuffle(stream_order_.begin(), stream_order_.end(), rng_);
        stream_pos_ = 0;
      }
      const auto& ex = examples[stream_order_[stream_pos_++]];
      batch.push_back(ex);
      for (auto m : ex.loss_mask) tokens += m;
    }
    loss_sum += update(batch);
  }
  return tokens ? loss_sum / static_cast<double>(tokens) : 0.0;
}

ValidationStats Trainer::validate(const Corpus& valid) const {
  ValidationStats out;
  if (valid.empty()) throw DataError("empty validation corpus");
  auto accumulate = [&](const Corpus& c, LossStats& into) {
    std::vector<Example> ex;
    for (const auto& p : c.pairs) {
      ex.push_back(make_tagged_example(p, c.direction, scheme_, vocab_));
    }
    for (std::size_t start = 0; start < ex.size(); start += 64) {
      const std::size_t n = std::min<std::size_t>(64, ex.size() - start);
      const auto s = forward_backward<float>(
          params_, std::span<const Example>(ex).subspan(start, n), nullptr);
      into.loss_sum += s.loss_sum;
      into.tokens += s.tokens;
      into.correct += s.correct;
    }
  };
  accumulate(valid, out.forward);
  out.all = out.forward;
  if (scheme_ == TaggingScheme::kBidirectional) {
    accumulate(valid.reversed(), out.reverse);
    out.all.loss_sum += out.reverse.loss_sum;
    out.all.tokens += out.reverse.tokens;
    out.all.correct += out.reverse.correct;
  }
  return out;
}

TrainResult train(ModelParams<float> params, const Corpus& train_corpus,
                  const Corpus& valid, const TrainConfig& cfg,
                  TaggingScheme scheme, const Vocabulary& vocab,
                  const EpochCallback& on_epoch) {
  if (train_corpus.empty()) throw DataError("cannot train on an empty corpus");
  Trainer trainer(std::move(params), cfg, scheme, vocab);
  const auto examples = make_examples(train_corpus, scheme, vocab);
  TrainResult result{trainer.params(), {}};
  bool have_best = false;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = trainer.run_epoch(examples);
    log.steps = trainer.steps();
    log.learning_rate = trainer.current_learning_rate();
    const auto v = trainer.validate(valid);
    log.valid_loss = v.all.mean_loss();
    log.valid_accuracy = v.all.accuracy();
    log.valid_loss_forward = v.forward.mean_loss();
    log.valid_loss_reverse = v.reverse.mean_loss();
    if (!std::isfinite(log.valid_loss)) {
      throw NumericError("non-finite validation loss at epoch " +
                         std::to_string(epoch));
    }
    result.log.epochs.push_back(log);
    if (!have_best || log.valid_loss < result.log.best_valid_loss) {
      have_best = true;
      result.log.best_valid_loss = log.valid_loss;
      result.log.best_epoch = epoch;
      result.params = trainer.params();
    }
    if (on_epoch) on_epoch(log);
    if (cfg.target_valid_accuracy > 0.0 &&
        log.valid_accuracy >= cfg.target_valid_accuracy) {
      break;
    }
  }
  return result;
}

GradientCheckReport gradient_check(const ModelParams<double>& params,
                                   std::span<const Example> batch,
                                   const std::vector<std::string>& tensors,
                                   int samples_per_tensor, double step,
                                   double tolerance, std::uint64_t seed) {
  Gradients<double> analytic = zeros_like(params);
  forward_backward(params, batch, &analytic);
  std::vector<int> selected;
  if (tensors.empty()) {
    selected.resize(params.tensors.size());
    std::iota(selected.begin(), selected.end(), 0);
  } else {
    for (const auto& name : tensors) {
      const int ix = params.index_of(name);
      if (ix < 0) throw UsageError("unknown tensor " + name);
      selected.push_back(ix);
    }
  }
  GradientCheckReport report;
  std::mt19937_64 rng(seed);
  ModelParams<double> probe = params;
  for (int ix : selected) {
    auto& t = probe.tensors[ix];
    std::uniform_int_distribution<Eigen::Index> pick(0, t.size() - 1);
    GradientCheckReport::Entry entry{params.names[ix], 0.0, 0};
    for (int s = 0; s < samples_per_tensor; ++s) {
      const Eigen::Index k = pick(rng);
      const double orig = t.data()[k];
      t.data()[k] = orig + step;
      const double up = forward_backward<double>(probe, batch, nullptr).mean_loss();
      t.data()[k] = orig - step;
      const double down =
          forward_backward<double>(probe, batch, nullptr).mean_loss();
      t.data()[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[ix].data()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double rel = std::abs(a - numeric) / denom;
      entry.max_relative_error = std::max(entry.max_relative_error, rel);
      ++entry.coordinates;
    }
    if (entry.max_relative_error > report.max_relative_error ||
        report.worst_tensor.empty()) {
      report.max_relative_error =
          std::max(report.max_relative_error, entry.max_relative_error);
      report.worst_tensor = entry.tensor;
    }
    report.per_tensor.push_back(entry);
  }
  if (report.max_relative_error > tolerance) {
    throw NumericError("gradient check failed for tensor " +
                       report.worst_tensor + ": relative error " +
                       std::to_string(report.max_relative_error));
  }
  return report;
}

}  // namespace isomt
