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

#include "isomt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "isomt/error.hpp"
#include "json.hpp"

namespace isomt {
namespace {

constexpr char kMagic[8] = {'I', 'S', 'O', 'M', 'T', 'C', 'K', 'P'};

template <typename U>
void write_le(std::ostream& out, U value) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw DataError("checkpoint truncated");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(buf[i]) << (8 * i);
  }
  return value;
}

nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["n_layers"] = c.n_layers;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["dropout"] = c.dropout;
  j["max_len"] = c.max_len;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.max_len = j.at("max_len").get<int>();
  return c;
}

}  // namespace

std::string train_log_json(const TrainLog& log) {
  nlohmann::ordered_json j;
  j["best_epoch"] = log.best_epoch;
  j["best_valid_loss"] = log.best_valid_loss;
  auto& epochs = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : log.epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["steps"] = e.steps;
    row["train_loss"] = e.train_loss;
    row["valid_loss"] = e.valid_loss;
    row["valid_accuracy"] = e.valid_accuracy;
    row["valid_loss_forward"] = e.valid_loss_forward;
    row["valid_loss_reverse"] = e.valid_loss_reverse;
    row["learning_rate"] = e.learning_rate;
    epochs.push_back(row);
  }
  return j.dump();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto& p = ckpt.params;
  if (p.vocab_size != ckpt.vocab.size()) {
    throw DataError("checkpoint vocabulary does not match model size");
  }
  nlohmann::ordered_json header;
  header["config"] = config_json(p.config);
  header["vocab_size"] = p.vocab_size;
  header["vocab_hash"] = hash_hex(ckpt.vocab.hash());
  header["vocab"] = nlohmann::json::parse(ckpt.vocab.to_json());
  header["scheme"] = to_string(ckpt.scheme);
  header["direction"] = {{"src_lang", ckpt.direction.src_lang},
                         {"tgt_lang", ckpt.direction.tgt_lang}};
  header["dtype"] = "float32-le";
  auto& table = header["tensors"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    table.push_back({{"name", p.names[i]},
                     {"rows", p.tensors[i].rows()},
                     {"cols", p.tensors[i].cols()}});
  }
  header["metadata"] = nlohmann::json::parse(ckpt.metadata_json);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, Checkpoint::kFormatVersion);
  write_le<std::uint32_t>(out, 0x01020304u);
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : p.tensors) {
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(t.data()[k]));
    }
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not a checkpoint");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != Checkpoint::kFormatVersion) {
    throw DataError("checkpoint format version " + std::to_string(version) +
                    " is not supported");
  }
  if (read_le<std::uint32_t>(in) != 0x01020304u) {
    throw DataError("checkpoint endianness probe mismatch");
  }
  const auto header_len = read_le<std::uint64_t>(in);
  if (header_len > (1ull << 32)) throw DataError("checkpoint header too large");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw DataError("checkpoint truncated");
  }
  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.vocab = Vocabulary::from_json(header.at("vocab").dump());
    const std::string stored_hash = header.at("vocab_hash").get<std::string>();
    if (stored_hash != hash_hex(ckpt.vocab.hash())) {
      throw DataError("checkpoint vocabulary hash is inconsistent");
    }
    if (expected_vocab_hash && stored_hash != hash_hex(*expected_vocab_hash)) {
      throw DataError("checkpoint vocabulary hash " + stored_hash +
                      " does not match expected " +
                      hash_hex(*expected_vocab_hash));
    }
    ckpt.params = ModelParams<float>::zeros(config_from_json(header.at("config")),
                                            header.at("vocab_size").get<int>());
    ckpt.scheme = parse_tagging_scheme(header.at("scheme").get<std::string>());
    ckpt.direction.src_lang = header.at("direction").at("src_lang").get<std::string>();
    ckpt.direction.tgt_lang = header.at("direction").at("tgt_lang").get<std::string>();
    ckpt.metadata_json = header.at("metadata").dump();
    const auto& table = header.at("tensors");
    if (table.size() != ckpt.params.tensors.size()) {
      throw DataError("checkpoint tensor count mismatch");
    }
    for (std::size_t i = 0; i < table.size(); ++i) {
      auto& t = ckpt.params.tensors[i];
      if (table[i].at("name").get<std::string>() != ckpt.params.names[i] ||
          table[i].at("rows").get<Eigen::Index>() != t.rows() ||
          table[i].at("cols").get<Eigen::Index>() != t.cols()) {
        throw DataError("checkpoint tensor " + ckpt.params.names[i] +
                        " has an unexpected name or shape");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
  for (auto& t : ckpt.params.tensors) {
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      t.data()[k] = std::bit_cast<float>(read_le<std::uint32_t>(in));
    }
  }
  return ckpt;
}

}  // namespace isomt
