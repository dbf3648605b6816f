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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "isomt/corpus.hpp"

namespace isomt {

// Character-level vocabulary. Ids are laid out as
//   0 <pad>, 1 <bos>, 2 <eos>, 3 <unk>, then length tags, then language and
//   language+length tags (sorted), then characters sorted by codepoint.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kFormatVersion = 1;

  Vocabulary() = default;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(id); }
  // -1 when absent.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const { return id(token) >= 0; }

  // Reserved ids are [0, num_reserved()); everything above is a character.
  int num_reserved() const { return num_reserved_; }
  bool is_character(int id) const { return id >= num_reserved_ && id < size(); }
  bool is_control(int id) const { return id > kUnk && id < num_reserved_; }

  // Leading control tokens become one id each; the remaining text is split
  // into Unicode scalars; <eos> is appended.
  std::vector<int> encode(std::string_view tagged) const;
  // Stops at <eos>; <pad> and <bos> are skipped; control tokens are rendered
  // followed by a space.
  std::string decode(std::span<const int> ids) const;

  std::string to_json() const;
  static Vocabulary from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  // FNV-1a over the serialized mapping.
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  friend Vocabulary build_vocab(const Corpus&, std::span<const DirectionTag>,
                                bool);
  void rebuild_index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int num_reserved_ = 0;
};

// Length tags are always reserved. Language and language+length tokens are
// added for both languages of every direction given.
Vocabulary build_vocab(const Corpus& corpus,
                       std::span<const DirectionTag> directions = {},
                       bool include_length_tags = true);

std::string hash_hex(std::uint64_t h);
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t seed = 14695981039346656037ull);

}  // namespace isomt
