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

#include "isomt/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "isomt/error.hpp"
#include "json.hpp"

namespace isomt {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

void Vocabulary::rebuild_index() {
  index_.clear();
  for (int i = 0; i < size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::vector<int> Vocabulary::encode(std::string_view tagged) const {
  std::vector<int> ids;
  for (const auto& tag : leading_tags(tagged)) {
    int t = id(tag);
    ids.push_back(t >= 0 && t < num_reserved_ ? t : kUnk);
  }
  for (char32_t c : utf8_decode(strip_tags(tagged))) {
    int t = id(utf8_encode(c));
    ids.push_back(t >= num_reserved_ ? t : kUnk);
  }
  ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int t : ids) {
    if (t == kEos) break;
    if (t == kPad || t == kBos) continue;
    if (t < 0 || t >= size()) throw DataError("token id out of range");
    out += tokens_[t];
    if (is_control(t)) out.push_back(' ');
  }
  return out;
}

std::string Vocabulary::to_json() const {
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j["num_reserved"] = num_reserved_;
  j["tokens"] = tokens_;
  return j.dump();
}

Vocabulary Vocabulary::from_json(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary JSON: ") + e.what());
  }
  if (!j.contains("format_version") ||
      j.at("format_version").get<int>() != kFormatVersion) {
    throw DataError("vocabulary format version mismatch (expected " +
                    std::to_string(kFormatVersion) + ")");
  }
  Vocabulary v;
  v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
  v.num_reserved_ = j.at("num_reserved").get<int>();
  if (v.num_reserved_ < 4 || v.num_reserved_ > v.size() ||
      v.tokens_[kPad] != "<pad>" || v.tokens_[kBos] != "<bos>" ||
      v.tokens_[kEos] != "<eos>" || v.tokens_[kUnk] != "<unk>") {
    throw DataError("vocabulary reserved block is malformed");
  }
  v.rebuild_index();
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  out << to_json() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::uint64_t Vocabulary::hash() const { return fnv1a(to_json()); }

Vocabulary build_vocab(const Corpus& corpus,
                       std::span<const DirectionTag> directions,
                       bool include_length_tags) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  Vocabulary v;
  v.tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  if (include_length_tags) {
    for (auto c : kLengthClasses) v.tokens_.push_back(length_tag_token(c));
  }
  std::set<std::string> direction_tokens;
  for (const auto& d : directions) {
    validate(d);
    for (const auto& lang : {d.src_lang, d.tgt_lang}) {
      direction_tokens.insert(language_token(lang));
      for (auto c : kLengthClasses) {
        direction_tokens.insert(language_length_token(lang, c));
      }
    }
  }
  v.tokens_.insert(v.tokens_.end(), direction_tokens.begin(),
                   direction_tokens.end());
  v.num_reserved_ = v.size();

  std::set<char32_t> chars;
  for (const auto& p : corpus.pairs) {
    for (const auto* side : {&p.source(), &p.target()}) {
      for (char32_t c : utf8_decode(strip_tags(*side))) chars.insert(c);
    }
  }
  for (char32_t c : chars) v.tokens_.push_back(utf8_encode(c));
  v.rebuild_index();
  return v;
}

}  // namespace isomt
