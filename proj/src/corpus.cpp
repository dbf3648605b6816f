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

#include "isomt/corpus.hpp"

#include <fstream>
#include <sstream>

#include "isomt/error.hpp"
#include "json.hpp"

namespace isomt {
namespace {

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' ||
         c == U'\v' || c == 0x00A0 || c == 0x3000;
}

// Length of the control token starting at s[0], or 0 if there is none.
std::size_t control_token_length(std::string_view s) {
  if (s.size() < 3 || s[0] != '<') return 0;
  if (!(s.substr(1, 2) == "v:" || s.substr(1, 2) == "l:" ||
        (s.size() > 4 && s.substr(1, 3) == "lv:"))) {
    return 0;
  }
  auto close = s.find('>');
  if (close == std::string_view::npos) return 0;
  for (std::size_t i = 1; i < close; ++i) {
    if (s[i] == ' ' || s[i] == '<') return 0;
  }
  return close + 1;
}

// Splits leading control tokens from the body.
std::pair<std::vector<std::string>, std::string_view> split_tags(
    std::string_view s) {
  std::vector<std::string> tags;
  while (true) {
    auto n = control_token_length(s);
    if (n == 0) break;
    tags.emplace_back(s.substr(0, n));
    s.remove_prefix(n);
    if (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  }
  return {std::move(tags), s};
}

}  // namespace

std::string_view to_string(LengthClass v) {
  switch (v) {
    case LengthClass::kShort:
      return "short";
    case LengthClass::kNormal:
      return "normal";
    case LengthClass::kLong:
      return "long";
  }
  return "normal";
}

std::string_view to_string(Provenance p) {
  return p == Provenance::kPseudo ? "pseudo" : "original";
}

LengthClass parse_length_class(std::string_view s) {
  if (s == "short") return LengthClass::kShort;
  if (s == "normal") return LengthClass::kNormal;
  if (s == "long") return LengthClass::kLong;
  throw DataError("unknown length class '" + std::string(s) + "'");
}

Provenance parse_provenance(std::string_view s) {
  if (s == "original") return Provenance::kOriginal;
  if (s == "pseudo") return Provenance::kPseudo;
  throw DataError("unknown provenance '" + std::string(s) + "'");
}

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    auto b = static_cast<unsigned char>(s[i]);
    char32_t cp;
    std::size_t extra;
    if (b < 0x80) {
      cp = b;
      extra = 0;
    } else if ((b & 0xE0) == 0xC0) {
      cp = b & 0x1F;
      extra = 1;
    } else if ((b & 0xF0) == 0xE0) {
      cp = b & 0x0F;
      extra = 2;
    } else if ((b & 0xF8) == 0xF0) {
      cp = b & 0x07;
      extra = 3;
    } else {
      throw DataError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    for (std::size_t k = 1; k <= extra; ++k) {
      if (i + k >= s.size()) {
        throw DataError("truncated UTF-8 sequence at offset " +
                        std::to_string(i));
      }
      auto c = static_cast<unsigned char>(s[i + k]);
      if ((c & 0xC0) != 0x80) {
        throw DataError("invalid UTF-8 continuation at offset " +
                        std::to_string(i + k));
      }
      cp = (cp << 6) | (c & 0x3F);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string utf8_encode(char32_t c) {
  std::string out;
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
  return out;
}

std::string utf8_encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) out += utf8_encode(c);
  return out;
}

std::string length_tag_token(LengthClass v) {
  return "<v:" + std::string(to_string(v)) + ">";
}

std::string language_token(std::string_view lang) {
  return "<l:" + std::string(lang) + ">";
}

std::string language_length_token(std::string_view lang, LengthClass v) {
  return "<lv:" + std::string(lang) + ":" + std::string(to_string(v)) + ">";
}

std::string prepend_tag(std::string_view sentence, std::string_view token) {
  std::string out(token);
  out.push_back(' ');
  out.append(sentence);
  return out;
}

std::string prepend_length_tag(std::string_view sentence, LengthClass v) {
  return prepend_tag(sentence, length_tag_token(v));
}

std::string strip_tags(std::string_view tagged) {
  return std::string(split_tags(tagged).second);
}

std::vector<std::string> leading_tags(std::string_view tagged) {
  return split_tags(tagged).first;
}

std::size_t char_length(std::string_view sentence) {
  auto body = utf8_decode(split_tags(sentence).second);
  std::size_t begin = 0;
  std::size_t end = body.size();
  while (begin < end && is_space(body[begin])) ++begin;
  while (end > begin && is_space(body[end - 1])) --end;
  return end - begin;
}

LengthClass classify_length(std::size_t src_len, std::size_t tgt_len) {
  if (src_len == 0) throw ZeroSourceLengthError("classify_length");
  if (100 * tgt_len < 95 * src_len) return LengthClass::kShort;
  if (100 * tgt_len > 105 * src_len) return LengthClass::kLong;
  return LengthClass::kNormal;
}

bool is_length_compliant(std::size_t src_len, std::size_t tgt_len) {
  if (src_len == 0) throw ZeroSourceLengthError("is_length_compliant");
  return 100 * tgt_len >= 90 * src_len && 100 * tgt_len <= 110 * src_len;
}

double length_ratio(std::size_t src_len, std::size_t tgt_len) {
  if (src_len == 0) throw ZeroSourceLengthError("length_ratio");
  return static_cast<double>(tgt_len) / static_cast<double>(src_len);
}

DirectionTag DirectionTag::reversed() const {
  return DirectionTag{tgt_lang, src_lang, length_class};
}

void validate(const DirectionTag& direction) {
  if (direction.src_lang.empty() || direction.tgt_lang.empty()) {
    throw DataError("direction languages must be nonempty");
  }
  if (direction.src_lang == direction.tgt_lang) {
    throw DataError("direction source and target language are both '" +
                    direction.src_lang + "'");
  }
}

BitextPair::BitextPair(std::string source, std::string target,
                       Provenance provenance)
    : source_(std::move(source)),
      target_(std::move(target)),
      src_len_(char_length(source_)),
      tgt_len_(char_length(target_)),
      length_class_(LengthClass::kNormal),
      provenance_(provenance) {
  if (src_len_ == 0) throw ZeroSourceLengthError("empty source sentence");
  if (tgt_len_ == 0) throw DataError("target length is zero (empty target)");
  length_class_ = classify_length(src_len_, tgt_len_);
}

BitextPair BitextPair::reversed() const {
  return BitextPair(target_, source_, provenance_);
}

Corpus Corpus::reversed() const {
  Corpus out;
  out.direction = direction.reversed();
  out.pairs.reserve(pairs.size());
  for (const auto& p : pairs) out.pairs.push_back(p.reversed());
  return out;
}

ClassHistogram class_histogram(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("class histogram of an empty corpus");
  std::array<std::size_t, 3> counts{};
  for (const auto& p : corpus.pairs) {
    ++counts[static_cast<std::size_t>(p.length_class())];
  }
  ClassHistogram h{};
  for (std::size_t i = 0; i < 3; ++i) {
    h[i] = 100.0 * static_cast<double>(counts[i]) /
           static_cast<double>(corpus.size());
  }
  return h;
}

CorpusFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return CorpusFormat::kJsonl;
  return CorpusFormat::kTsv;
}

LoadedCorpus load_corpus(const std::filesystem::path& path,
                         const DirectionTag& direction,
                         std::optional<CorpusFormat> format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  const auto fmt = format.value_or(format_from_path(path));
  LoadedCorpus out;
  out.corpus.direction = direction;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string source, target;
    Provenance provenance = Provenance::kOriginal;
    std::optional<std::string> stored_class;
    try {
      if (fmt == CorpusFormat::kTsv) {
        std::vector<std::string> cols;
        std::string col;
        std::istringstream ss(line);
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (!line.empty() && line.back() == '\t') cols.emplace_back();
        if (cols.size() < 2 || cols.size() > 3) {
          fail("expected 2 or 3 tab-separated columns, found " +
               std::to_string(cols.size()));
        }
        source = cols[0];
        target = cols[1];
        if (cols.size() == 3) provenance = parse_provenance(cols[2]);
      } else {
        auto j = nlohmann::json::parse(line);
        if (!j.is_object() || !j.contains("source") || !j.contains("target")) {
          fail("expected an object with 'source' and 'target'");
        }
        source = j.at("source").get<std::string>();
        target = j.at("target").get<std::string>();
        if (j.contains("provenance")) {
          provenance = parse_provenance(j.at("provenance").get<std::string>());
        }
        if (j.contains("length_class")) {
          stored_class = j.at("length_class").get<std::string>();
        }
      }
      BitextPair pair(std::move(source), std::move(target), provenance);
      if (stored_class && *stored_class != to_string(pair.length_class())) {
        out.warnings.push_back(
            path.string() + ":" + std::to_string(lineno) +
            ": stored length_class '" + *stored_class + "' differs from '" +
            std::string(to_string(pair.length_class())) + "'; using the latter");
      }
      out.corpus.pairs.push_back(std::move(pair));
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
    } catch (const DataError& e) {
      std::string msg = e.what();
      if (msg.rfind(path.string() + ":", 0) == 0) throw;
      fail(msg);
    }
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path,
                 std::optional<CorpusFormat> format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  const auto fmt = format.value_or(format_from_path(path));
  for (const auto& p : corpus.pairs) {
    if (fmt == CorpusFormat::kTsv) {
      if (p.source().find_first_of("\t\n") != std::string::npos ||
          p.target().find_first_of("\t\n") != std::string::npos) {
        throw DataError("TSV cannot hold tabs or newlines inside a sentence");
      }
      out << p.source() << '\t' << p.target() << '\t'
          << to_string(p.provenance()) << '\n';
    } else {
      nlohmann::ordered_json j;
      j["source"] = p.source();
      j["target"] = p.target();
      j["provenance"] = to_string(p.provenance());
      j["length_class"] = to_string(p.length_class());
      out << j.dump() << '\n';
    }
  }
}

}  // namespace isomt
