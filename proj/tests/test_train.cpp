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

#include "doctest.h"
#include "isomt/error.hpp"
#include "isomt/train.hpp"
#include "test_util.hpp"

using namespace isomt;

namespace {

Corpus small_corpus() {
  Corpus c;
  c.pairs = {BitextPair("abc", "cba"), BitextPair("abcd", "dcb"), BitextPair("ab", "bab")};
  return c;
}

Vocabulary vocab_for(const Corpus& c) {
  const std::vector<DirectionTag> dirs{c.direction};
  return build_vocab(c, dirs);
}

}  // namespace

TEST_CASE("tagging scheme names") {
  CHECK(parse_tagging_scheme("none") == TaggingScheme::kNone);
  CHECK(parse_tagging_scheme("length") == TaggingScheme::kSourceLengthTag);
  CHECK(parse_tagging_scheme("bidirectional") == TaggingScheme::kBidirectional);
  CHECK_THROWS_AS(parse_tagging_scheme("both"), UsageError);
  CHECK(to_string(TaggingScheme::kBidirectional) == "bidirectional");
}

TEST_CASE("tagged examples") {
  const auto c = small_corpus();
  const auto v = vocab_for(c);
  const auto& pair = c.pairs[1];  // 4 -> 3 characters: short
  REQUIRE(pair.length_class() == LengthClass::kShort);

  const auto none = make_tagged_example(pair, c.direction, TaggingScheme::kNone, v);
  CHECK(none.src == v.encode("abcd"));
  CHECK(none.dec_in == std::vector<int>{Vocabulary::kBos, v.id("d"), v.id("c"), v.id("b")});

  const auto tagged = make_tagged_example(pair, c.direction, TaggingScheme::kSourceLengthTag, v);
  CHECK(tagged.src.front() == v.id("<v:short>"));
  CHECK(tagged.dec_out == v.encode("dcb"));

  const auto bi = make_tagged_example(pair, c.direction, TaggingScheme::kBidirectional, v);
  CHECK(bi.src.front() == v.id("<l:xa>"));
  CHECK(bi.dec_in[1] == v.id("<lv:xb:short>"));
  CHECK(bi.loss_mask.front() == 0);
  CHECK(bi.dec_out.size() == bi.dec_in.size());

  const auto all = make_examples(c, TaggingScheme::kBidirectional, v);
  CHECK(all.size() == 2 * c.size());
  const auto rev = all[c.size() + 1];
  CHECK(rev.src.front() == v.id("<l:xb>"));
  CHECK(rev.dec_in[1] == v.id("<lv:xa:long>"));
}

TEST_CASE("train config presets") {
  CHECK(TrainConfig::desk().learning_rate == 3e-4);
  CHECK(TrainConfig::full().learning_rate == 1e-7);
  CHECK(TrainConfig::full().finetune_epochs == 5);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const auto c = small_corpus();
  const auto v = vocab_for(c);
  auto cfg = isomt::testing::tiny_config();
  cfg.dropout = 0.1;
  TrainConfig tc;
  tc.max_epochs = 6;
  tc.batch_size = 2;
  tc.warmup_steps = 1;
  tc.learning_rate = 1e-2;
  auto run = [&] {
    return train(ModelParams<float>::initialized(cfg, v.size(), 3), c, c, tc,
                 TaggingScheme::kSourceLengthTag, v);
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.log.epochs.size() == 6);
  for (std::size_t i = 0; i < a.log.epochs.size(); ++i) {
    CHECK(a.log.epochs[i].train_loss == b.log.epochs[i].train_loss);
    CHECK(a.log.epochs[i].valid_loss == b.log.epochs[i].valid_loss);
  }
  CHECK(a.log.epochs.back().valid_loss < a.log.epochs.front().valid_loss);
  CHECK(a.log.best_valid_loss <= a.log.epochs.back().valid_loss);
  double best = 1e9;
  for (const auto& e : a.log.epochs) best = std::min(best, e.valid_loss);
  CHECK(a.log.best_valid_loss == best);
}

TEST_CASE("frozen tensors do not move") {
  const auto c = small_corpus();
  const auto v = vocab_for(c);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 2;
  tc.frozen = {"embedding", "decoder.norm.gain"};
  const auto init = ModelParams<float>::initialized(isomt::testing::tiny_config(), v.size(), 4);
  const auto r = train(init, c, c, tc, TaggingScheme::kNone, v);
  CHECK(r.params.tensors[init.embedding] == init.tensors[init.embedding]);
  const int g = init.index_of("decoder.norm.gain");
  CHECK(r.params.tensors[g] == init.tensors[g]);
  const int w = init.index_of("encoder.0.ff.in.w");
  CHECK(r.params.tensors[w] != init.tensors[w]);
  tc.frozen = {"no.such.tensor"};
  CHECK_THROWS_AS(train(init, c, c, tc, TaggingScheme::kNone, v), UsageError);
}

TEST_CASE("learning rate schedule") {
  const auto c = small_corpus();
  const auto v = vocab_for(c);
  TrainConfig tc;
  tc.warmup_steps = 4;
  tc.batch_size = 1;
  Trainer t(ModelParams<float>::initialized(isomt::testing::tiny_config(), v.size(), 5), tc,
            TaggingScheme::kNone, v);
  const auto ex = make_examples(c, TaggingScheme::kNone, v);
  t.run_steps(ex, 2);
  CHECK(t.steps() == 2);
  CHECK(t.current_learning_rate() < tc.learning_rate);
  t.run_steps(ex, 5);
  CHECK(t.current_learning_rate() == doctest::Approx(tc.learning_rate));
}

TEST_CASE("validation splits directions in bidirectional mode") {
  const auto c = small_corpus();
  const auto v = vocab_for(c);
  Trainer t(ModelParams<float>::initialized(isomt::testing::tiny_config(), v.size(), 6), {},
            TaggingScheme::kBidirectional, v);
  const auto s = t.validate(c);
  CHECK(s.forward.tokens > 0);
  CHECK(s.reverse.tokens > 0);
  CHECK(s.all.tokens == s.forward.tokens + s.reverse.tokens);
}

TEST_CASE("gradient check flags a wrong tolerance") {
  const auto c = small_corpus();
  const auto v = vocab_for(c);
  const auto p = isomt::testing::random_params<double>(isomt::testing::tiny_config(), v.size(), 7);
  const auto ex = make_examples(c, TaggingScheme::kSourceLengthTag, v);
  const std::vector<Example> one{ex[0]};
  CHECK_NOTHROW(gradient_check(p, one));
  // A tolerance below double rounding noise must fail and name a tensor.
  try {
    gradient_check(p, one, {}, 6, 1e-5, 1e-15);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find('.') != std::string::npos);
  }
}
