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

#include <filesystem>
#include <random>

#include "doctest.h"
#include "isomt/corpus.hpp"
#include "isomt/error.hpp"
#include "isomt/tokenizer.hpp"

using namespace isomt;

namespace {

Corpus one_pair(const std::string& s, const std::string& t) {
  Corpus c;
  c.pairs.emplace_back(s, t);
  return c;
}

const std::vector<DirectionTag> kDirs{DirectionTag{}};

}  // namespace

TEST_CASE("vocabulary characters are exactly the corpus characters") {
  const auto v = build_vocab(one_pair("ab", "ba"), kDirs);
  std::vector<std::string> chars;
  for (int i = 0; i < v.size(); ++i) {
    if (v.is_character(i)) chars.push_back(v.token(i));
  }
  CHECK(chars == std::vector<std::string>{"a", "b"});
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.id("<eos>") == Vocabulary::kEos);
}

TEST_CASE("vocabulary build is deterministic and carries tags") {
  const auto c = one_pair("hello there", "salut toi");
  const auto a = build_vocab(c, kDirs);
  const auto b = build_vocab(c, kDirs);
  CHECK(a == b);
  CHECK(a.hash() == b.hash());
  for (const char* t : {"<v:short>", "<v:normal>", "<v:long>", "<l:xa>", "<l:xb>",
                        "<lv:xa:short>", "<lv:xb:long>"}) {
    CHECK(a.contains(t));
    CHECK(a.is_control(a.id(t)));
  }
  const auto plain = build_vocab(c, kDirs, false);
  CHECK_FALSE(plain.contains("<v:short>"));
}

TEST_CASE("encode and decode") {
  const auto v = build_vocab(one_pair("ab", "ba"), kDirs);
  const auto e = v.encode("ab");
  CHECK(e == std::vector<int>{v.id("a"), v.id("b"), Vocabulary::kEos});
  CHECK(v.decode(e) == "ab");
  const auto u = v.encode("a\xe2\x98\x82");
  CHECK(u[1] == Vocabulary::kUnk);
  CHECK(v.encode("") == std::vector<int>{Vocabulary::kEos});
  CHECK(v.decode(v.encode("")) == "");
  const auto tagged = v.encode("<v:long> ab");
  REQUIRE(tagged.size() == 4);
  CHECK(tagged[0] == v.id("<v:long>"));
  CHECK(v.decode(tagged) == "<v:long> ab");
}

TEST_CASE("vocabulary serialization") {
  const auto v = build_vocab(one_pair("xyz", "zyx"), kDirs);
  const auto again = Vocabulary::from_json(v.to_json());
  CHECK(again == v);
  CHECK(again.num_reserved() == v.num_reserved());
  const auto path = std::filesystem::temp_directory_path() / "isomt_vocab_test.json";
  v.save(path);
  CHECK(Vocabulary::load(path) == v);
  CHECK_THROWS_AS(Vocabulary::from_json("{\"format_version\": 99, \"tokens\": []}"),
                  DataError);
  CHECK_THROWS_AS(Vocabulary::from_json("not json"), DataError);
}

TEST_CASE("fnv1a reference values") {
  // Published FNV-1a 64-bit test vectors.
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(hash_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("random in-vocabulary strings round trip") {
  const auto v = build_vocab(one_pair("abc de", "f\xc3\xa9g"), kDirs);
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e", " ", "f", "\xc3\xa9", "g"};
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1), len(0, 30);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    for (std::size_t k = len(rng); k > 0; --k) s += alphabet[pick(rng)];
    const auto ids = v.encode(s);
    for (int id : ids) REQUIRE(id != Vocabulary::kPad);
    REQUIRE(ids.back() == Vocabulary::kEos);
    REQUIRE(v.decode(ids) == s);
    auto padded = ids;
    padded.insert(padded.begin() + padded.size() / 2, Vocabulary::kPad);
    padded.insert(padded.begin(), Vocabulary::kBos);
    REQUIRE(v.decode(padded) == s);
  }
}

TEST_CASE("each control token encodes to one id") {
  const auto v = build_vocab(one_pair("ab", "ba"), kDirs);
  const auto ids = v.encode("<l:xb> <lv:xa:short> <v:normal> ab");
  REQUIRE(ids.size() == 6);
  CHECK(ids[0] == v.id("<l:xb>"));
  CHECK(ids[1] == v.id("<lv:xa:short>"));
  CHECK(ids[2] == v.id("<v:normal>"));
  CHECK(v.encode("<v:weird> ab")[0] == Vocabulary::kUnk);
}
