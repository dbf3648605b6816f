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
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace isomt {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int n_layers = 2;
  int d_model = 128;
  int n_heads = 4;
  int d_ff = 512;
  double dropout = 0.1;
  int max_len = 256;

  static ModelConfig desk() { return {}; }
  static ModelConfig full() { return {6, 1024, 16, 4096, 0.1, 1024}; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// One training/scoring example. dec_in starts with <bos> (optionally followed
// by forced control tokens); dec_out[k] is the token predicted after reading
// dec_in[0..k]. loss_mask selects which positions are scored.
struct Example {
  std::vector<int> src;
  std::vector<int> dec_in;
  std::vector<int> dec_out;
  std::vector<std::uint8_t> loss_mask;
};

// Builds an Example from encoded source ids, a forced decoder prefix (which
// must start with <bos>) and target ids ending in <eos>.
Example make_example(std::vector<int> src, std::vector<int> prefix,
                     const std::vector<int>& target);

// Index handles into ModelParams::tensors.
struct LinearIx {
  int w = -1, b = -1;
};
struct NormIx {
  int gain = -1, bias = -1;
};
struct AttentionIx {
  LinearIx q, k, v, o;
};
struct FeedForwardIx {
  LinearIx in, out;
};
struct EncoderLayerIx {
  NormIx ln_attn;
  AttentionIx self_attn;
  NormIx ln_ff;
  FeedForwardIx ff;
};
struct DecoderLayerIx {
  NormIx ln_self;
  AttentionIx self_attn;
  NormIx ln_cross;
  AttentionIx cross_attn;
  NormIx ln_ff;
  FeedForwardIx ff;
};

// Pre-norm encoder-decoder transformer. The token embedding is shared by the
// encoder, the decoder and the output projection; the output layer adds a
// per-token bias. Positional encodings are sinusoidal and not stored.
template <typename T>
struct ModelParams {
  ModelConfig config;
  int vocab_size = 0;
  std::vector<std::string> names;
  std::vector<Mat<T>> tensors;

  int embedding = -1;
  int output_bias = -1;
  std::vector<EncoderLayerIx> encoder;
  NormIx encoder_norm;
  std::vector<DecoderLayerIx> decoder;
  NormIx decoder_norm;

  // Builds the layout with every tensor zero, norm gains one.
  static ModelParams zeros(const ModelConfig& config, int vocab_size);
  // Xavier-uniform matrices, zero biases, unit norm gains.
  static ModelParams initialized(const ModelConfig& config, int vocab_size,
                                 std::uint64_t seed);

  template <typename U>
  ModelParams<U> cast() const;

  int index_of(const std::string& name) const;
  std::size_t num_parameters() const;
  bool all_finite() const;
};

template <typename T>
using Gradients = std::vector<Mat<T>>;

template <typename T>
Gradients<T> zeros_like(const ModelParams<T>& params);

struct ForwardOptions {
  double dropout = 0.0;
  double label_smoothing = 0.0;
  std::mt19937_64* rng = nullptr;  // required when dropout > 0
  // Tensor indices whose gradients stay exactly zero.
  std::vector<int> frozen;
};

struct LossStats {
  double loss_sum = 0.0;  // summed token cross-entropy over masked positions
  long tokens = 0;
  long correct = 0;  // argmax hits over masked positions
  double mean_loss() const { return tokens ? loss_sum / tokens : 0.0; }
  double accuracy() const {
    return tokens ? static_cast<double>(correct) / tokens : 0.0;
  }
};

// Per-token mean cross-entropy over the batch. When grads is non-null, the
// gradient of the mean loss is accumulated into it.
template <typename T>
LossStats forward_backward(const ModelParams<T>& params,
                           std::span<const Example> batch,
                           Gradients<T>* grads,
                           const ForwardOptions& options = {});

// Log-probability table (dec_in.size() x vocab) for one example; row k is the
// distribution of the token following dec_in[0..k].
template <typename T>
Mat<T> forward_logprobs(const ModelParams<T>& params, std::span<const int> src,
                        std::span<const int> dec_in);

// log p(target | source) summed over the target tokens (including <eos>),
// conditioned on the forced prefix.
template <typename T>
double sequence_logprob(const ModelParams<T>& params, std::span<const int> src,
                        std::span<const int> target,
                        std::span<const int> prefix);

// Self-attention probability rows of the first encoder layer, for checking
// normalization. Returns one (len x len) matrix per head.
template <typename T>
std::vector<Mat<T>> encoder_attention_weights(const ModelParams<T>& params,
                                              std::span<const int> src);

// Step-wise decoder with cached keys and values, numerically equivalent to
// forward_logprobs over the same prefix.
template <typename T>
class IncrementalDecoder {
 public:
  struct State {
    std::vector<Mat<T>> keys;    // per layer, capacity x d_model
    std::vector<Mat<T>> values;  // per layer
    int length = 0;
  };

  IncrementalDecoder(const ModelParams<T>& params, std::span<const int> src,
                     int capacity);

  State initial_state() const;
  void copy_state(const State& from, State& to) const;
  int capacity() const { return capacity_; }

  // Feeds tokens[i] to *states[i]; returns log-probabilities, one row each.
  Mat<T> step(std::span<State* const> states, std::span<const int> tokens) const;

 private:
  const ModelParams<T>& params_;
  int capacity_;
  int src_len_;
  std::vector<Mat<T>> cross_keys_;
  std::vector<Mat<T>> cross_values_;
};

}  // namespace isomt
