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

// Slow training behaviour checks on the desk preset.

#include <numeric>

#include "doctest.h"
#include "isomt/decode.hpp"
#include "isomt/selflearn.hpp"
#include "isomt/toy_corpus.hpp"
#include "isomt/train.hpp"

using namespace isomt;

namespace {

Corpus toy(std::size_t n, std::uint64_t seed) {
  ToyCorpusConfig c;
  c.n_pairs = n;
  c.seed = seed;
  return make_toy_corpus(c);
}

Corpus copy_task(std::size_t n, std::uint64_t seed) {
  Corpus out;
  for (const auto& p : toy(n, seed).pairs) out.pairs.emplace_back(p.source(), p.source());
  return out;
}

Vocabulary vocab_for(const Corpus& c) {
  const std::vector<DirectionTag> dirs{c.direction};
  return build_vocab(c, dirs);
}

double mean_lr(const Corpus& c) {
  double s = 0.0;
  for (const auto& p : c.pairs) s += p.lr();
  return s / static_cast<double>(c.size());
}

}  // namespace

TEST_CASE("copy task reaches 95% validation accuracy within 50 epochs") {
  const auto train_c = copy_task(200, 11);
  const auto valid_c = copy_task(40, 12);
  const auto vocab = vocab_for(toy(200, 11));
  TrainConfig tc = TrainConfig::desk();
  tc.max_epochs = 50;
  tc.target_valid_accuracy = 0.95;
  const auto r = train(ModelParams<float>::initialized(ModelConfig::desk(), vocab.size(), 1), train_c,
                       valid_c, tc, TaggingScheme::kNone, vocab);
  const auto& last = r.log.epochs.back();
  MESSAGE("copy task: valid accuracy " << last.valid_accuracy << " after " << r.log.epochs.size()
                                       << " epochs");
  CHECK(last.valid_accuracy > 0.95);
  CHECK(r.log.epochs.size() <= 50);
}

TEST_CASE("identity-trained model copies held-out inputs") {
  // Word forms are prefixes of each other, so exact copies need more data
  // than the 95% milestone above.
  const auto train_c = copy_task(1000, 13);
  const auto valid_c = copy_task(40, 12);
  const auto vocab = vocab_for(toy(200, 11));
  TrainConfig tc = TrainConfig::desk();
  tc.max_epochs = 40;
  tc.target_valid_accuracy = 1.0;
  const auto r = train(ModelParams<float>::initialized(ModelConfig::desk(), vocab.size(), 1), train_c,
                       valid_c, tc, TaggingScheme::kNone, vocab);
  MESSAGE("identity: accuracy " << r.log.epochs.back().valid_accuracy << " after "
                                << r.log.epochs.size() << " epochs");
  const Translator t(r.params, vocab, TaggingScheme::kNone, train_c.direction);
  std::vector<std::string> src;
  for (const auto& p : valid_c.pairs) src.push_back(p.source());
  const auto out = translate_corpus(t, src, DecodeConfig{}, 1);
  REQUIRE(out.size() == src.size());
  int equal = 0;
  for (std::size_t i = 0; i < src.size(); ++i) equal += out[i] == src[i];
  MESSAGE("identity: " << equal << "/" << src.size() << " held-out outputs equal their inputs");
  CHECK(equal == static_cast<int>(src.size()));
}

TEST_CASE("bidirectional losses agree on a symmetric corpus") {
  const auto half = toy(150, 21);
  Corpus sym = half;
  for (const auto& p : half.reversed().pairs) sym.pairs.push_back(p);
  const auto vhalf = toy(30, 22);
  Corpus valid = vhalf;
  for (const auto& p : vhalf.reversed().pairs) valid.pairs.push_back(p);
  const auto vocab = vocab_for(sym);
  TrainConfig tc = TrainConfig::desk();
  tc.max_epochs = 8;
  const auto r = train(ModelParams<float>::initialized(ModelConfig::desk(), vocab.size(), 2), sym,
                       valid, tc, TaggingScheme::kBidirectional, vocab);
  const auto& e = r.log.epochs[r.log.best_epoch - 1];
  MESSAGE("symmetric corpus: forward " << e.valid_loss_forward << ", reverse "
                                       << e.valid_loss_reverse);
  const double hi = std::max(e.valid_loss_forward, e.valid_loss_reverse);
  const double lo = std::min(e.valid_loss_forward, e.valid_loss_reverse);
  CHECK(lo > 0.0);
  CHECK((hi - lo) / lo < 0.10);
}

TEST_CASE("v=long reverse model shortens the pseudo length ratio") {
  const auto d = toy(600, 31);
  const auto vocab = vocab_for(d);
  TrainConfig tc = TrainConfig::desk();
  tc.max_epochs = 15;
  const auto rev = train(ModelParams<float>::initialized(ModelConfig::desk(), vocab.size(), 3),
                         d.reversed(), toy(60, 32).reversed(), tc, TaggingScheme::kSourceLengthTag,
                         vocab);
  const Translator t(rev.params, vocab, TaggingScheme::kSourceLengthTag, d.direction.reversed());
  const auto sample = toy(150, 33);
  SelfLearnConfig cfg;
  cfg.mode = SelfLearnMode::kOffline;
  const auto longp = generate_pseudo_bitext(t, sample, cfg);
  cfg.pseudo_tag = LengthClass::kNormal;
  const auto normalp = generate_pseudo_bitext(t, sample, cfg);
  MESSAGE("mean LR: D " << mean_lr(sample) << ", D' (v=long) " << mean_lr(longp.corpus)
                        << ", D' (v=normal) " << mean_lr(normalp.corpus));
  REQUIRE(longp.corpus.size() > 0);
  CHECK(mean_lr(longp.corpus) < mean_lr(sample));
  CHECK(mean_lr(longp.corpus) < mean_lr(normalp.corpus));
}

TEST_CASE("online pseudo class histogram moves toward normal") {
  const auto d = toy(500, 41);
  const auto valid = toy(50, 42);
  const auto vocab = vocab_for(d);
  TrainConfig tc = TrainConfig::desk();
  tc.max_epochs = 8;
  const auto bi = train(ModelParams<float>::initialized(ModelConfig::desk(), vocab.size(), 4), d, valid,
                        tc, TaggingScheme::kBidirectional, vocab);
  SelfLearnConfig cfg;
  cfg.finetune_epochs = 3;
  const auto r = online_self_learning(bi.params, vocab, d, valid, cfg, tc);
  REQUIRE(r.report.rounds.size() == 3);
  for (const auto& round : r.report.rounds) {
    MESSAGE("epoch " << round.epoch << ": short/normal/long " << round.pseudo_histogram[0] << "/"
                     << round.pseudo_histogram[1] << "/" << round.pseudo_histogram[2]);
  }
  CHECK(r.report.rounds.back().pseudo_histogram[1] >= r.report.rounds.front().pseudo_histogram[1]);
}
