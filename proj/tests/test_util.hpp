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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "isomt/model.hpp"

namespace isomt::testing {

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.dropout = 0.0;
  c.max_len = 32;
  return c;
}

// Random parameters with biases and norms perturbed so that every tensor
// carries signal.
template <typename T>
ModelParams<T> random_params(const ModelConfig& config, int vocab, std::uint64_t seed,
                             double scale = 1.0) {
  auto p = ModelParams<T>::initialized(config, vocab, seed);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    auto& t = p.tensors[i];
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      t.data()[k] = static_cast<T>(scale * t.data()[k] + noise(rng));
    }
  }
  return p;
}

inline std::vector<int> ids(std::initializer_list<int> v) { return std::vector<int>(v); }

}  // namespace isomt::testing
