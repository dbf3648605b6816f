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

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace isomt {

enum class LengthClass { kShort = 0, kNormal = 1, kLong = 2 };
inline constexpr std::array<LengthClass, 3> kLengthClasses = {
    LengthClass::kShort, LengthClass::kNormal, LengthClass::kLong};

enum class Provenance { kOriginal, kPseudo };

std::string_view to_string(LengthClass v);
std::string_view to_string(Provenance p);
// Throws DataError on anything other than short/normal/long.
LengthClass parse_length_class(std::string_view s);
Provenance parse_provenance(std::string_view s);

// UTF-8 helpers. Invalid byte sequences throw DataError.
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(std::u32string_view s);
std::string utf8_encode(char32_t c);

// Control tokens are written as "<...>" at the very start of a sentence, each
// followed by one separating space.
std::string length_tag_token(LengthClass v);          // "<v:normal>"
std::string language_token(std::string_view lang);    // "<l:xa>"
std::string language_length_token(std::string_view lang, LengthClass v);  // "<lv:xb:long>"

std::string prepend_length_tag(std::string_view sentence, LengthClass v);
std::string prepend_tag(std::string_view sentence, std::string_view token);
// Removes every leading control token and its separator.
std::string strip_tags(std::string_view tagged);
// Leading control tokens of a tagged sentence, in order.
std::vector<std::string> leading_tags(std::string_view tagged);

// Unicode scalar count of the sentence with leading control tokens removed
// and surrounding whitespace trimmed. Internal spaces count.
std::size_t char_length(std::string_view sentence);

// normal is the closed interval [0.95, 1.05]. Comparisons are done in exact
// integer arithmetic, so 105/100 is normal and 106/100 is long.
LengthClass classify_length(std::size_t src_len, std::size_t tgt_len);
// 0.90 <= tgt/src <= 1.10, inclusive.
bool is_length_compliant(std::size_t src_len, std::size_t tgt_len);
double length_ratio(std::size_t src_len, std::size_t tgt_len);

struct DirectionTag {
  std::string src_lang = "xa";
  std::string tgt_lang = "xb";
  std::optional<LengthClass> length_class;

  DirectionTag reversed() const;
  bool operator==(const DirectionTag&) const = default;
};

void validate(const DirectionTag& direction);

class BitextPair {
 public:
  // Throws ZeroSourceLengthError / DataError when either side is empty.
  BitextPair(std::string source, std::string target,
             Provenance provenance = Provenance::kOriginal);

  const std::string& source() const { return source_; }
  const std::string& target() const { return target_; }
  std::size_t src_len() const { return src_len_; }
  std::size_t tgt_len() const { return tgt_len_; }
  double lr() const { return length_ratio(src_len_, tgt_len_); }
  LengthClass length_class() const { return length_class_; }
  Provenance provenance() const { return provenance_; }
  bool compliant() const { return is_length_compliant(src_len_, tgt_len_); }

  BitextPair reversed() const;

  bool operator==(const BitextPair& o) const {
    return source_ == o.source_ && target_ == o.target_ &&
           provenance_ == o.provenance_;
  }

 private:
  std::string source_;
  std::string target_;
  std::size_t src_len_;
  std::size_t tgt_len_;
  LengthClass length_class_;
  Provenance provenance_;
};

struct Corpus {
  std::vector<BitextPair> pairs;
  DirectionTag direction;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  // Swaps source and target of every pair and the direction; classes are
  // recomputed for the new direction.
  Corpus reversed() const;
};

// Percentages indexed by LengthClass; sums to 100 up to rounding.
using ClassHistogram = std::array<double, 3>;
ClassHistogram class_histogram(const Corpus& corpus);
inline double share(const ClassHistogram& h, LengthClass v) {
  return h[static_cast<std::size_t>(v)];
}

enum class CorpusFormat { kTsv, kJsonl };
// Picks the format from the extension: .jsonl/.json -> jsonl, otherwise tsv.
CorpusFormat format_from_path(const std::filesystem::path& path);

struct LoadedCorpus {
  Corpus corpus;
  std::vector<std::string> warnings;
};

LoadedCorpus load_corpus(const std::filesystem::path& path,
                         const DirectionTag& direction = {},
                         std::optional<CorpusFormat> format = std::nullopt);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path,
                 std::optional<CorpusFormat> format = std::nullopt);

}  // namespace isomt
