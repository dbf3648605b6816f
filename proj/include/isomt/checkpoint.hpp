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
#include <filesystem>
#include <optional>
#include <string>

#include "isomt/corpus.hpp"
#include "isomt/model.hpp"
#include "isomt/tokenizer.hpp"
#include "isomt/train.hpp"

namespace isomt {

// Binary container:
//   8 bytes  magic "ISOMTCKP"
//   u32 LE   format version
//   u32 LE   0x01020304 (endianness probe)
//   u64 LE   header byte length, then the JSON header (config, vocabulary,
//            vocabulary hash, tensor table, training metadata)
//   float32 little-endian tensor blobs in header order, row-major
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelParams<float> params;
  Vocabulary vocab;
  TaggingScheme scheme = TaggingScheme::kNone;
  DirectionTag direction;
  std::string metadata_json = "{}";  // training log and run information
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws DataError on a malformed file, a version mismatch, or when
// `expected_vocab_hash` is given and differs from the stored hash.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_vocab_hash =
                               std::nullopt);

std::string train_log_json(const TrainLog& log);

}  // namespace isomt
