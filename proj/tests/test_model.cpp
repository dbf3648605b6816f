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
#include <random>

#include "doctest.h"
#include "isomt/error.hpp"
#include "isomt/model.hpp"
#include "isomt/tokenizer.hpp"
#include "isomt/train.hpp"
#include "test_util.hpp"

using namespace isomt;
using isomt::testing::random_params;
using isomt::testing::tiny_config;

namespace {

constexpr int kV = 9;

Example sample_example() {
  return make_example({4, 5, 6, 7, Vocabulary::kEos}, {Vocabulary::kBos}, {8, 4, 5, Vocabulary::kEos});
}

double row_logsumexp(const Mat<double>& m, int r) {
  double mx = m.row(r).maxCoeff();
  return mx + std::log((m.row(r).array() - mx).exp().sum());
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(ModelConfig::desk().validate());
  CHECK_NOTHROW(ModelConfig::full().validate());
  auto c = tiny_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("parameter layout") {
  const auto p = ModelParams<float>::initialized(tiny_config(), kV, 1);
  CHECK(p.names.size() == p.tensors.size());
  CHECK(p.index_of("embedding") == p.embedding);
  CHECK(p.tensors[p.embedding].rows() == kV);
  CHECK(p.tensors[p.embedding].cols() == 8);
  CHECK(p.index_of("nope") == -1);
  CHECK(p.all_finite());
  const auto same = ModelParams<float>::initialized(tiny_config(), kV, 1);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) CHECK(p.tensors[i] == same.tensors[i]);
}

TEST_CASE("log-probability rows normalize") {
  const auto p = random_params<double>(tiny_config(), kV, 3, 2.0);
  const std::vector<int> src{4, 5, 6, Vocabulary::kEos};
  const std::vector<int> dec{Vocabulary::kBos, 7, 8, 4, 6};
  const auto lp = forward_logprobs(p, src, dec);
  REQUIRE(lp.rows() == 5);
  REQUIRE(lp.cols() == kV);
  for (int r = 0; r < lp.rows(); ++r) CHECK(std::abs(row_logsumexp(lp, r)) < 1e-6);
  for (const auto& w : encoder_attention_weights(p, src)) {
    for (int r = 0; r < w.rows(); ++r) CHECK(w.row(r).sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("decoder is causal") {
  const auto p = random_params<double>(tiny_config(), kV, 4, 2.0);
  const std::vector<int> src{4, 5, 6, Vocabulary::kEos};
  std::vector<int> dec{Vocabulary::kBos, 7, 8, 4, 6, 5};
  const auto base = forward_logprobs(p, src, dec);
  for (std::size_t j = 1; j < dec.size(); ++j) {
    auto changed = dec;
    changed[j] = changed[j] == 8 ? 7 : 8;
    const auto lp = forward_logprobs(p, src, changed);
    for (std::size_t r = 0; r < j; ++r) {
      CHECK((lp.row(r) - base.row(r)).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK((lp.row(j) - base.row(j)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("zero output layer gives a uniform distribution") {
  const auto p = ModelParams<double>::zeros(tiny_config(), kV);
  const std::vector<int> src{4, 5, Vocabulary::kEos};
  const std::vector<int> dec{Vocabulary::kBos, 6};
  const auto lp = forward_logprobs(p, src, dec);
  for (int r = 0; r < lp.rows(); ++r) {
    for (int c = 0; c < kV; ++c) CHECK(lp(r, c) == doctest::Approx(-std::log(kV)).epsilon(1e-12));
  }
  const std::vector<int> target{Vocabulary::kEos};
  const std::vector<int> prefix{Vocabulary::kBos};
  CHECK(sequence_logprob(p, src, target, prefix) == doctest::Approx(-std::log(kV)));
}

TEST_CASE("sequence log-probability is the sum of step rows") {
  const auto p = random_params<double>(tiny_config(), kV, 5, 2.0);
  const std::vector<int> src{4, 5, 6, Vocabulary::kEos};
  const std::vector<int> prefix{Vocabulary::kBos};
  const std::vector<int> target{7, 8, 4, Vocabulary::kEos};
  std::vector<int> dec = prefix;
  dec.insert(dec.end(), target.begin(), target.end() - 1);
  const auto lp = forward_logprobs(p, src, dec);
  double sum = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) sum += lp(k, target[k]);
  CHECK(sequence_logprob(p, src, target, prefix) == doctest::Approx(sum).epsilon(1e-12));
  // Appending a token never increases the total.
  std::vector<int> prev;
  double prev_lp = 0.0;
  for (int tok : target) {
    prev.push_back(tok);
    const double cur = sequence_logprob(p, src, prev, prefix);
    CHECK(cur <= prev_lp + 1e-12);
    prev_lp = cur;
  }
}

TEST_CASE("incremental decoder matches the full forward pass") {
  const auto p = random_params<double>(tiny_config(), kV, 6, 2.0);
  const std::vector<int> src{4, 5, 6, 7, Vocabulary::kEos};
  const std::vector<int> dec{Vocabulary::kBos, 8, 4, 6, 5, 7};
  const auto full = forward_logprobs(p, src, dec);
  IncrementalDecoder<double> inc(p, src, static_cast<int>(dec.size()));
  auto state = inc.initial_state();
  auto* ptr = &state;
  for (std::size_t k = 0; k < dec.size(); ++k) {
    const int tok = dec[k];
    const auto row = inc.step(std::span<decltype(ptr) const>(&ptr, 1), std::span<const int>(&tok, 1));
    CHECK((row.row(0) - full.row(k)).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(state.length == static_cast<int>(dec.size()));
}

TEST_CASE("float and double passes agree") {
  const auto pd = random_params<double>(tiny_config(), kV, 7);
  const auto pf = pd.cast<float>();
  const std::vector<int> src{4, 5, Vocabulary::kEos};
  const std::vector<int> dec{Vocabulary::kBos, 6, 7};
  const auto a = forward_logprobs(pd, src, dec);
  const auto b = forward_logprobs(pf, src, dec).cast<double>();
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("gradient check over every tensor") {
  auto cfg = tiny_config();
  cfg.n_layers = 2;
  const auto p = random_params<double>(cfg, kV, 11);
  const std::vector<Example> batch{sample_example()};
  const auto report = gradient_check(p, batch, {}, 4);
  CHECK(report.per_tensor.size() == p.tensors.size());
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("gradient check on a two-example batch with a forced prefix") {
  const auto p = random_params<double>(tiny_config(), kV, 12);
  std::vector<Example> batch{sample_example(),
                             make_example({5, 4, Vocabulary::kEos}, {Vocabulary::kBos, 3},
                                          {6, 6, Vocabulary::kEos})};
  const auto report = gradient_check(p, batch, {"embedding", "output_bias", "decoder.0.cross_attn.k.w"}, 8);
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("zero output layer gradient is softmax minus one-hot") {
  auto p = ModelParams<double>::zeros(tiny_config(), kV);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  auto& bias = p.tensors[p.output_bias];
  for (Eigen::Index i = 0; i < bias.size(); ++i) bias.data()[i] = n(rng);
  const auto ex = sample_example();
  const std::vector<Example> batch{ex};
  auto grads = zeros_like(p);
  const auto stats = forward_backward(p, batch, &grads);
  // Every position sees logits equal to the bias.
  Eigen::VectorXd logits = Eigen::Map<const Eigen::VectorXd>(bias.data(), kV);
  Eigen::VectorXd soft = (logits.array() - logits.maxCoeff()).exp();
  soft /= soft.sum();
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(kV);
  for (int y : ex.dec_out) {
    expected += soft;
    expected[y] -= 1.0;
  }
  expected /= static_cast<double>(ex.dec_out.size());
  for (int i = 0; i < kV; ++i) CHECK(grads[p.output_bias].data()[i] == doctest::Approx(expected[i]).epsilon(1e-10));
  CHECK(stats.tokens == static_cast<long>(ex.dec_out.size()));
}

TEST_CASE("frozen tensors get exactly zero gradient") {
  const auto p = random_params<double>(tiny_config(), kV, 13);
  const std::vector<Example> batch{sample_example()};
  ForwardOptions opt;
  opt.frozen = {p.embedding, p.index_of("encoder.0.ff.in.w")};
  auto grads = zeros_like(p);
  forward_backward(p, batch, &grads, opt);
  CHECK(grads[p.embedding].cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads[p.index_of("encoder.0.ff.in.w")].cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads[p.output_bias].cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("dropout is reproducible from the seed") {
  auto cfg = tiny_config();
  cfg.dropout = 0.3;
  const auto p = random_params<float>(cfg, kV, 14);
  const std::vector<Example> batch{sample_example()};
  auto run = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ForwardOptions opt;
    opt.dropout = 0.3;
    opt.rng = &rng;
    return forward_backward(p, batch, static_cast<Gradients<float>*>(nullptr), opt).loss_sum;
  };
  CHECK(run(1) == run(1));
  CHECK(run(1) != forward_backward(p, batch, static_cast<Gradients<float>*>(nullptr)).loss_sum);
}

TEST_CASE("non-finite parameters raise a numeric error") {
  auto p = random_params<double>(tiny_config(), kV, 15);
  p.tensors[p.output_bias](0, 0) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<Example> batch{sample_example()};
  CHECK_FALSE(p.all_finite());
  CHECK_THROWS_AS(forward_backward(p, batch, static_cast<Gradients<double>*>(nullptr)), NumericError);
}

TEST_CASE("inputs beyond max_len are rejected") {
  const auto p = random_params<double>(tiny_config(), kV, 16);
  std::vector<int> src(40, 4);
  const std::vector<int> dec{Vocabulary::kBos};
  CHECK_THROWS_AS(forward_logprobs(p, src, dec), SequenceLengthError);
  CHECK_THROWS_AS(make_example({4}, {5}, {Vocabulary::kEos}), DataError);
}

TEST_CASE("batch loss is the token mean of negative sequence log-probabilities") {
  const auto p = random_params<double>(tiny_config(), kV, 17);
  const std::vector<Example> batch{
      sample_example(),
      make_example({5, 6, Vocabulary::kEos}, {Vocabulary::kBos, 3}, {6, 7, 8, Vocabulary::kEos})};
  const auto stats = forward_backward(p, batch, static_cast<Gradients<double>*>(nullptr));
  double total = 0.0;
  long tokens = 0;
  total -= sequence_logprob(p, batch[0].src, std::vector<int>{8, 4, 5, Vocabulary::kEos},
                            std::vector<int>{Vocabulary::kBos});
  total -= sequence_logprob(p, batch[1].src, std::vector<int>{6, 7, 8, Vocabulary::kEos},
                            std::vector<int>{Vocabulary::kBos, 3});
  tokens = 8;
  CHECK(stats.tokens == tokens);
  CHECK(stats.loss_sum == doctest::Approx(total).epsilon(1e-10));
  CHECK(stats.mean_loss() == doctest::Approx(total / tokens).epsilon(1e-10));
}
