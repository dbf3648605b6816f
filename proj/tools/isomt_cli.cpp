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

// isomt command-line driver.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "isomt/checkpoint.hpp"
#include "isomt/corpus.hpp"
#include "isomt/decode.hpp"
#include "isomt/error.hpp"
#include "isomt/metrics.hpp"
#include "isomt/model.hpp"
#include "isomt/rerank.hpp"
#include "isomt/selflearn.hpp"
#include "isomt/tokenizer.hpp"
#include "isomt/toy_corpus.hpp"
#include "isomt/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace isomt;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---- resolved configuration ----------------------------------------------

struct ToySection {
  std::size_t train_pairs = 1200;
  std::size_t valid_pairs = 100;
  std::size_t test_pairs = 200;
  std::uint64_t lexicon_seed = 2026;
  int concepts = 24;
  int min_words = 2;
  int max_words = 5;
  std::array<double, 3> class_mix = {1.0, 1.0, 1.0};
};

struct RunConfig {
  std::uint64_t seed = 1;
  int jobs = 1;
  bool deterministic = false;
  DirectionTag direction;
  ModelConfig model;
  TrainConfig train;
  TaggingScheme scheme = TaggingScheme::kSourceLengthTag;
  DecodeConfig decode;
  RerankConfig rerank;
  SelfLearnConfig selflearn;
  ToySection toy;
};

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return k == a; })) {
      throw UsageError("config: unknown key '" + where + "." + k + "'");
    }
  }
}

void apply_config(const json& j, RunConfig& c) {
  check_keys(j, "", {"seed", "jobs", "deterministic", "direction", "scheme",
                     "model", "train", "decode", "rerank", "selflearn", "toy"});
  take(j, "seed", c.seed);
  take(j, "jobs", c.jobs);
  take(j, "deterministic", c.deterministic);
  if (j.contains("scheme")) c.scheme = parse_tagging_scheme(j["scheme"].get<std::string>());
  if (j.contains("direction")) {
    const auto& d = j["direction"];
    check_keys(d, "direction", {"src", "tgt"});
    take(d, "src", c.direction.src_lang);
    take(d, "tgt", c.direction.tgt_lang);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model", {"preset", "n_layers", "d_model", "n_heads", "d_ff",
                            "dropout", "max_len"});
    if (m.contains("preset")) {
      const auto p = m["preset"].get<std::string>();
      if (p == "desk") c.model = ModelConfig::desk();
      else if (p == "full") c.model = ModelConfig::full();
      else throw UsageError("config: unknown model preset '" + p + "'");
    }
    take(m, "n_layers", c.model.n_layers);
    take(m, "d_model", c.model.d_model);
    take(m, "n_heads", c.model.n_heads);
    take(m, "d_ff", c.model.d_ff);
    take(m, "dropout", c.model.dropout);
    take(m, "max_len", c.model.max_len);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, "train", {"preset", "learning_rate", "warmup_steps", "batch_size",
                            "max_epochs", "finetune_epochs", "label_smoothing",
                            "grad_clip", "adam_beta1", "adam_beta2", "adam_eps",
                            "target_valid_accuracy", "frozen"});
    if (t.contains("preset")) {
      const auto p = t["preset"].get<std::string>();
      if (p == "desk") c.train = TrainConfig::desk();
      else if (p == "full") c.train = TrainConfig::full();
      else throw UsageError("config: unknown train preset '" + p + "'");
    }
    take(t, "learning_rate", c.train.learning_rate);
    take(t, "warmup_steps", c.train.warmup_steps);
    take(t, "batch_size", c.train.batch_size);
    take(t, "max_epochs", c.train.max_epochs);
    take(t, "finetune_epochs", c.train.finetune_epochs);
    take(t, "label_smoothing", c.train.label_smoothing);
    take(t, "grad_clip", c.train.grad_clip);
    take(t, "adam_beta1", c.train.adam_beta1);
    take(t, "adam_beta2", c.train.adam_beta2);
    take(t, "adam_eps", c.train.adam_eps);
    take(t, "target_valid_accuracy", c.train.target_valid_accuracy);
    take(t, "frozen", c.train.frozen);
  }
  if (j.contains("decode")) {
    const auto& d = j["decode"];
    check_keys(d, "decode", {"beam", "nbest", "max_output_len", "length_tag"});
    take(d, "beam", c.decode.beam_size);
    take(d, "nbest", c.decode.n_best);
    if (d.contains("max_output_len") && !d["max_output_len"].is_null()) {
      c.decode.max_output_len = d["max_output_len"].get<int>();
    }
    if (d.contains("length_tag") && !d["length_tag"].is_null()) {
      c.decode.length_tag = parse_length_class(d["length_tag"].get<std::string>());
    }
  }
  if (j.contains("rerank")) {
    const auto& r = j["rerank"];
    check_keys(r, "rerank", {"alpha", "variant", "normalization"});
    take(r, "alpha", c.rerank.alpha);
    if (r.contains("variant")) {
      c.rerank.variant = parse_synchrony_variant(r["variant"].get<std::string>());
    }
    if (r.contains("normalization")) {
      c.rerank.normalization = parse_normalization(r["normalization"].get<std::string>());
    }
  }
  if (j.contains("selflearn")) {
    const auto& s = j["selflearn"];
    check_keys(s, "selflearn", {"mode", "merge", "pseudo_tag", "pseudo_beam",
                                "schedule", "regenerate_every_steps",
                                "finetune_epochs", "pseudo_both_directions"});
    if (s.contains("mode")) c.selflearn.mode = parse_selflearn_mode(s["mode"].get<std::string>());
    if (s.contains("merge")) c.selflearn.merge = parse_merge_mode(s["merge"].get<std::string>());
    if (s.contains("pseudo_tag")) {
      c.selflearn.pseudo_tag = parse_length_class(s["pseudo_tag"].get<std::string>());
    }
    take(s, "pseudo_beam", c.selflearn.pseudo_beam);
    if (s.contains("schedule")) c.selflearn.schedule = parse_schedule(s["schedule"].get<std::string>());
    take(s, "regenerate_every_steps", c.selflearn.regenerate_every_steps);
    take(s, "finetune_epochs", c.selflearn.finetune_epochs);
    take(s, "pseudo_both_directions", c.selflearn.pseudo_both_directions);
  }
  if (j.contains("toy")) {
    const auto& t = j["toy"];
    check_keys(t, "toy", {"train_pairs", "valid_pairs", "test_pairs", "lexicon_seed",
                          "concepts", "min_words", "max_words", "class_mix"});
    take(t, "train_pairs", c.toy.train_pairs);
    take(t, "valid_pairs", c.toy.valid_pairs);
    take(t, "test_pairs", c.toy.test_pairs);
    take(t, "lexicon_seed", c.toy.lexicon_seed);
    take(t, "concepts", c.toy.concepts);
    take(t, "min_words", c.toy.min_words);
    take(t, "max_words", c.toy.max_words);
    take(t, "class_mix", c.toy.class_mix);
  }
}

json config_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["deterministic"] = c.deterministic;
  j["direction"] = {{"src", c.direction.src_lang}, {"tgt", c.direction.tgt_lang}};
  j["scheme"] = to_string(c.scheme);
  j["model"] = {{"n_layers", c.model.n_layers}, {"d_model", c.model.d_model},
                {"n_heads", c.model.n_heads},   {"d_ff", c.model.d_ff},
                {"dropout", c.model.dropout},   {"max_len", c.model.max_len}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"warmup_steps", c.train.warmup_steps},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"finetune_epochs", c.train.finetune_epochs},
                {"label_smoothing", c.train.label_smoothing},
                {"grad_clip", c.train.grad_clip},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"target_valid_accuracy", c.train.target_valid_accuracy},
                {"frozen", c.train.frozen}};
  j["decode"] = {{"beam", c.decode.beam_size},
                 {"nbest", c.decode.n_best},
                 {"max_output_len", c.decode.max_output_len
                                        ? json(*c.decode.max_output_len)
                                        : json(nullptr)},
                 {"length_tag", c.decode.length_tag
                                    ? json(std::string(to_string(*c.decode.length_tag)))
                                    : json(nullptr)}};
  j["rerank"] = {{"alpha", c.rerank.alpha},
                 {"variant", to_string(c.rerank.variant)},
                 {"normalization", to_string(c.rerank.normalization)}};
  const auto& s = c.selflearn;
  j["selflearn"] = {{"mode", to_string(s.mode)},
                    {"merge", to_string(s.merge)},
                    {"pseudo_tag", to_string(s.pseudo_tag)},
                    {"pseudo_beam", s.pseudo_beam},
                    {"schedule", to_string(s.schedule)},
                    {"regenerate_every_steps", s.regenerate_every_steps},
                    {"finetune_epochs", s.finetune_epochs},
                    {"pseudo_both_directions", s.pseudo_both_directions}};
  j["toy"] = {{"train_pairs", c.toy.train_pairs}, {"valid_pairs", c.toy.valid_pairs},
              {"test_pairs", c.toy.test_pairs},   {"lexicon_seed", c.toy.lexicon_seed},
              {"concepts", c.toy.concepts},       {"min_words", c.toy.min_words},
              {"max_words", c.toy.max_words},     {"class_mix", c.toy.class_mix}};
  return j;
}

// ---- shared flags ---------------------------------------------------------

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool deterministic = false;
  std::string manifest;
};

struct DecodeFlags {
  std::optional<int> beam;
  std::optional<int> nbest;
  std::optional<std::string> length_tag;
  std::optional<int> max_len;
};

struct RerankFlags {
  std::optional<double> alpha;
  std::optional<std::string> variant;
  std::optional<std::string> normalization;
};

struct SelfLearnFlags {
  std::optional<std::string> mode;
  std::optional<std::string> merge;
  std::optional<std::string> pseudo_tag;
  std::optional<std::string> schedule;
  std::optional<long> every_k;
  std::optional<int> epochs;
  bool both_directions = false;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + p.string() + "'");
}

RunConfig resolve(const GlobalFlags& g) {
  RunConfig c;
  if (!g.config.empty()) {
    json j;
    try {
      j = json::parse(read_file(g.config));
    } catch (const json::parse_error& e) {
      throw UsageError("config '" + g.config + "': " + e.what());
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
    try {
      apply_config(j, c);
    } catch (const json::exception& e) {
      throw UsageError("config '" + g.config + "': " + e.what());
    }
  }
  if (g.seed) c.seed = *g.seed;
  if (g.jobs) c.jobs = *g.jobs;
  if (g.deterministic) c.deterministic = true;
  if (c.deterministic) c.jobs = 1;
  if (c.jobs < 1) throw UsageError("--jobs must be >= 1");
  c.train.seed = c.seed;
  return c;
}

void apply(const DecodeFlags& f, RunConfig& c) {
  if (f.beam) c.decode.beam_size = *f.beam;
  if (f.nbest) c.decode.n_best = *f.nbest;
  if (f.length_tag) c.decode.length_tag = parse_length_class(*f.length_tag);
  if (f.max_len) c.decode.max_output_len = *f.max_len;
  c.decode.validate();
}

void apply(const RerankFlags& f, RunConfig& c) {
  if (f.alpha) c.rerank.alpha = *f.alpha;
  if (f.variant) c.rerank.variant = parse_synchrony_variant(*f.variant);
  if (f.normalization) c.rerank.normalization = parse_normalization(*f.normalization);
  c.rerank.validate();
}

void apply(const SelfLearnFlags& f, RunConfig& c) {
  auto& s = c.selflearn;
  if (f.mode) s.mode = parse_selflearn_mode(*f.mode);
  if (f.merge) s.merge = parse_merge_mode(*f.merge);
  if (f.pseudo_tag) s.pseudo_tag = parse_length_class(*f.pseudo_tag);
  if (f.schedule) s.schedule = parse_schedule(*f.schedule);
  if (f.every_k) s.regenerate_every_steps = *f.every_k;
  if (f.epochs) s.finetune_epochs = *f.epochs;
  if (f.both_directions) s.pseudo_both_directions = true;
  s.jobs = c.jobs;
  s.validate();
}

// ---- manifest -------------------------------------------------------------

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json file_entry(const fs::path& p) {
  json e;
  e["path"] = p.string();
  if (fs::is_regular_file(p)) {
    e["bytes"] = fs::file_size(p);
    e["fnv1a"] = hash_hex(fnv1a(read_file(p)));
  } else {
    e["fnv1a"] = nullptr;
  }
  return e;
}

class Manifest {
 public:
  Manifest(std::string command, const GlobalFlags& g)
      : command_(std::move(command)), override_(g.manifest),
        started_(utc_now()), t0_(std::chrono::steady_clock::now()) {}

  void input(const fs::path& p) { inputs_.push_back(p); }
  void output(const fs::path& p) {
    outputs_.push_back(p);
    if (default_path_.empty()) default_path_ = p.string() + ".manifest.json";
  }
  void set_default_path(const fs::path& p) { default_path_ = p; }
  void set_config(json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t s) { seed_ = s; }
  void note(const std::string& key, json v) { extra_[key] = std::move(v); }

  void write(const std::string& status, const std::string& error = {}) {
    fs::path path = override_.empty() ? default_path_ : fs::path(override_);
    if (path.empty()) return;
    json j;
    j["command"] = command_;
    j["version"] = kVersion;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    j["seed"] = seed_;
    j["config"] = config_;
    j["inputs"] = json::array();
    for (const auto& p : inputs_) j["inputs"].push_back(file_entry(p));
    j["outputs"] = json::array();
    for (const auto& p : outputs_) j["outputs"].push_back(file_entry(p));
    if (!extra_.empty()) j["details"] = extra_;
    j["started_at"] = started_;
    j["finished_at"] = utc_now();
    j["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    write_file(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string override_;
  fs::path default_path_;
  std::string started_;
  std::chrono::steady_clock::time_point t0_;
  std::vector<fs::path> inputs_, outputs_;
  json config_ = json::object();
  json extra_ = json::object();
  std::uint64_t seed_ = 0;
};

// ---- helpers --------------------------------------------------------------

bool is_corpus_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".tsv" || ext == ".jsonl";
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const fs::path& p, std::span<const std::string> lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file(p, text);
}

Corpus load_checked(const fs::path& p, const DirectionTag& direction) {
  auto loaded = load_corpus(p, direction);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  return std::move(loaded.corpus);
}

// Sources or targets of a corpus file, or the lines of a plain text file.
std::vector<std::string> read_side(const fs::path& p, bool target) {
  if (!is_corpus_file(p)) return read_lines(p);
  const auto corpus = load_checked(p, {});
  std::vector<std::string> out;
  out.reserve(corpus.size());
  for (const auto& pair : corpus.pairs) out.push_back(target ? pair.target() : pair.source());
  return out;
}

Checkpoint load_model(const fs::path& p, Manifest& m) {
  m.input(p);
  return load_checkpoint(p);
}

void log_epoch(const EpochLog& e) {
  std::fprintf(stderr,
               "epoch %3d  steps %6ld  lr %.2e  train %.4f  valid %.4f  acc %.4f\n",
               e.epoch, e.steps, e.learning_rate, e.train_loss, e.valid_loss,
               e.valid_accuracy);
}

// ---- commands -------------------------------------------------------------

struct PrepareArgs {
  bool toy = false;
  std::string train, valid, test, out_dir;
};

int cmd_prepare(const GlobalFlags& g, const PrepareArgs& a) {
  RunConfig c = resolve(g);
  Manifest m("prepare", g);
  m.set_default_path(fs::path(a.out_dir) / "prepare.manifest.json");
  m.set_config(config_json(c));
  m.set_seed(c.seed);
  try {
    fs::create_directories(a.out_dir);
    std::vector<std::pair<std::string, Corpus>> splits;
    if (a.toy) {
      ToyCorpusConfig tc;
      tc.lexicon_seed = c.toy.lexicon_seed;
      tc.concepts = c.toy.concepts;
      tc.min_words = c.toy.min_words;
      tc.max_words = c.toy.max_words;
      tc.class_mix = c.toy.class_mix;
      tc.direction = c.direction;
      const std::pair<const char*, std::size_t> sizes[] = {
          {"train", c.toy.train_pairs}, {"valid", c.toy.valid_pairs},
          {"test", c.toy.test_pairs}};
      std::uint64_t offset = 0;
      for (const auto& [name, n] : sizes) {
        tc.seed = c.seed * 1000 + offset++;
        tc.n_pairs = n;
        if (n > 0) splits.emplace_back(name, make_toy_corpus(tc));
      }
    } else {
      const std::pair<const char*, const std::string*> files[] = {
          {"train", &a.train}, {"valid", &a.valid}, {"test", &a.test}};
      for (const auto& [name, path] : files) {
        if (path->empty()) continue;
        m.input(*path);
        splits.emplace_back(name, load_checked(*path, c.direction));
      }
    }
    if (splits.empty() || splits.front().first != "train") {
      throw UsageError("prepare needs --train or --toy");
    }
    const std::vector<DirectionTag> dirs{c.direction};
    const Vocabulary vocab = build_vocab(splits.front().second, dirs);
    json summary = json::object();
    for (const auto& [name, corpus] : splits) {
      const fs::path out = fs::path(a.out_dir) / (name + ".jsonl");
      save_corpus(corpus, out);
      m.output(out);
      const auto h = class_histogram(corpus);
      summary[name] = {{"pairs", corpus.size()},
                       {"short", h[0]}, {"normal", h[1]}, {"long", h[2]}};
      std::printf("%-5s %6zu pairs  short %5.1f%%  normal %5.1f%%  long %5.1f%%\n",
                  name.c_str(), corpus.size(), share(h, LengthClass::kShort),
                  share(h, LengthClass::kNormal), share(h, LengthClass::kLong));
    }
    const fs::path vocab_path = fs::path(a.out_dir) / "vocab.json";
    vocab.save(vocab_path);
    m.output(vocab_path);
    m.note("splits", summary);
    m.note("vocab_size", vocab.size());
    m.note("vocab_hash", hash_hex(vocab.hash()));
    std::printf("vocab %d tokens\n", vocab.size());
    m.write("ok");
  } catch (const std::exception& e) {
    m.write("error", e.what());
    throw;
  }
  return 0;
}

struct TrainArgs {
  std::string train, valid, vocab, out, log, scheme;
  std::optional<int> epochs;
  bool reverse = false;
};

int cmd_train(const GlobalFlags& g, const TrainArgs& a) {
  RunConfig c = resolve(g);
  if (!a.scheme.empty()) c.scheme = parse_tagging_scheme(a.scheme);
  if (a.epochs) c.train.max_epochs = *a.epochs;
  c.model.validate();
  c.train.validate();
  Manifest m("train", g);
  m.set_default_path(a.out + ".manifest.json");
  m.set_config(config_json(c));
  m.set_seed(c.seed);
  m.note("reverse", a.reverse);
  try {
    m.input(a.train);
    m.input(a.valid);
    m.input(a.vocab);
    const Vocabulary vocab = Vocabulary::load(a.vocab);
    Corpus train = load_checked(a.train, c.direction);
    Corpus valid = load_checked(a.valid, c.direction);
    if (a.reverse) {
      train = train.reversed();
      valid = valid.reversed();
    }
    if (train.empty() || valid.empty()) throw DataError("empty training or validation corpus");
    auto params = ModelParams<float>::initialized(c.model, vocab.size(), c.seed);
    std::fprintf(stderr, "%s -> %s, scheme %s, %zu parameters, %zu pairs\n",
                 train.direction.src_lang.c_str(), train.direction.tgt_lang.c_str(),
                 std::string(to_string(c.scheme)).c_str(), params.num_parameters(),
                 train.size());
    auto result = isomt::train(std::move(params), train, valid, c.train, c.scheme,
                               vocab, log_epoch);
    const std::string log_json = train_log_json(result.log);
    json meta;
    meta["command"] = "train";
    meta["config"] = config_json(c);
    meta["train_log"] = json::parse(log_json);
    Checkpoint ckpt{std::move(result.params), vocab, c.scheme, train.direction,
                    meta.dump()};
    save_checkpoint(ckpt, a.out);
    m.output(a.out);
    const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log.json") : fs::path(a.log);
    write_file(log_path, log_json + "\n");
    m.output(log_path);
    m.note("best_epoch", result.log.best_epoch);
    m.note("best_valid_loss", result.log.best_valid_loss);
    m.write("ok");
  } catch (const std::exception& e) {
    m.write("error", e.what());
    throw;
  }
  return 0;
}

template <typename F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(n);
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int k = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw DataError("sentence " + std::to_string(i + 1) + ": " + errors[i]);
  }
}

struct TranslateArgs {
  std::string checkpoint, input, output;
  bool greedy = false;
  bool reverse = false;
};

int cmd_translate(const GlobalFlags& g, const TranslateArgs& a, const DecodeFlags& df) {
  RunConfig c = resolve(g);
  apply(df, c);
  if (a.greedy && c.decode.n_best > 1) throw UsageError("--greedy produces a single hypothesis");
  Manifest m("translate", g);
  m.set_default_path(a.output + ".manifest.json");
  m.set_seed(c.seed);
  try {
    const Checkpoint ckpt = load_model(a.checkpoint, m);
    m.input(a.input);
    const auto sources = read_side(a.input, false);
    DirectionTag direction = ckpt.direction;
    if (a.reverse) {
      if (ckpt.scheme != TaggingScheme::kBidirectional) {
        throw UsageError("--reverse needs a bidirectional checkpoint");
      }
      direction = direction.reversed();
    }
    DecodeConfig dc = c.decode;
    dc.direction = direction;
    if (a.greedy) dc.beam_size = 1;
    if (ckpt.scheme != TaggingScheme::kNone && !dc.length_tag &&
        std::none_of(sources.begin(), sources.end(),
                     [](const std::string& s) { return !leading_tags(s).empty(); })) {
      dc.length_tag = LengthClass::kNormal;
    }
    if (ckpt.scheme == TaggingScheme::kNone && dc.length_tag) {
      throw UsageError("--length-tag given for an untagged checkpoint");
    }
    c.decode = dc;
    json cj = config_json(c);
    cj["greedy"] = a.greedy;
    cj["checkpoint_scheme"] = to_string(ckpt.scheme);
    cj["direction"] = {{"src", direction.src_lang}, {"tgt", direction.tgt_lang}};
    m.set_config(cj);
    const Translator translator(ckpt.params, ckpt.vocab, ckpt.scheme, direction);
    const bool jsonl = dc.n_best > 1 || fs::path(a.output).extension() == ".jsonl";
    if (a.greedy) {
      std::vector<std::string> out(sources.size());
      parallel_for(sources.size(), c.jobs,
                   [&](std::size_t i) { out[i] = translator.greedy(sources[i], dc).text; });
      write_lines(a.output, out);
    } else if (jsonl) {
      write_nbest_jsonl(a.output, nbest_corpus(translator, sources, dc, c.jobs));
    } else {
      write_lines(a.output, translate_corpus(translator, sources, dc, c.jobs));
    }
    m.output(a.output);
    m.note("sentences", sources.size());
    m.write("ok");
  } catch (const std::exception& e) {
    m.write("error", e.what());
    throw;
  }
  return 0;
}

struct RerankArgs {
  std::string input, output, one_best;
};

int cmd_rerank(const GlobalFlags& g, const RerankArgs& a, const RerankFlags& rf) {
  RunConfig c = resolve(g);
  apply(rf, c);
  Manifest m("rerank", g);
  m.set_default_path(a.output + ".manifest.json");
  m.set_config(config_json(c));
  m.set_seed(c.seed);
  try {
    m.input(a.input);
    auto lists = read_nbest_jsonl(a.input);
    std::vector<std::string> best;
    for (auto& l : lists) {
      l.hypotheses = rerank(std::move(l.hypotheses), char_length(l.source), c.rerank);
      if (l.hypotheses.empty()) throw DataError("empty N-best list for '" + l.source + "'");
      best.push_back(l.hypotheses.front().text);
    }
    write_nbest_jsonl(a.output, lists);
    m.output(a.output);
    if (!a.one_best.empty()) {
      write_lines(a.one_best, best);
      m.output(a.one_best);
    }
    m.write("ok");
  } catch (const std::exception& e) {
    m.write("error", e.what());
    throw;
  }
  return 0;
}

struct TuneArgs {
  std::string input, references, output;
};

int cmd_tune_alpha(const GlobalFlags& g, const TuneArgs& a, const RerankFlags& rf) {
  RunConfig c = resolve(g);
  apply(rf, c);
  Manifest m("tune-alpha", g);
  m.set_default_path(a.output + ".manifest.json");
  m.set_config(config_json(c));
  m.set_seed(c.seed);
  try {
    m.input(a.input);
    m.input(a.references);
    const auto lists = read_nbest_jsonl(a.input);
    const auto refs = read_side(a.references, true);
    if (refs.size() != lists.size()) {
      throw DataError("references and N-best lists differ in count (" +
                      std::to_string(refs.size()) + " vs " +
                      std::to_string(lists.size()) + ")");
    }
    const auto tuning = tune_alpha(lists, refs, c.rerank.variant, c.rerank.normalization);
    json j;
    j["variant"] = to_string(c.rerank.variant);
    j["normalization"] = to_string(c.rerank.normalization);
    j["best_alpha"] = tuning.best_alpha;
    j["table"] = json::array();
    std::printf("alpha    BLEU     LC    LCB\n");
    for (const auto& r : tuning.table) {
      j["table"].push_back({{"alpha", r.alpha}, {"bleu", r.bleu}, {"lc", r.lc}, {"lcb", r.lcb}});
      std::printf("%5.2f %6.1f %6.1f %6.1f%s\n", r.alpha, r.bleu, r.lc, r.lcb,
                  r.alpha == tuning.best_alpha ? "  *" : "");
    }
    write_file(a.output, j.dump(2) + "\n");
    m.output(a.output);
    m.note("best_alpha", tuning.best_alpha);
    m.write("ok");
  } catch (const std::exception& e) {
    m.write("error", e.what());
    throw;
  }
  return 0;
}

struct SelfLearnArgs {
  std::string checkpoint, reverse_checkpoint, train, valid, out, report, merged;
};

int cmd_selflearn(const GlobalFlags& g, const SelfLearnArgs& a, const SelfLearnFlags& sf) {
  RunConfig c = resolve(g);
  apply(sf, c);
  c.train.validate();
  Manifest m("selflearn", g);
  m.set_default_path(a.out + ".manifest.json");
  m.set_config(config_json(c));
  m.set_seed(c.seed);
  try {
    const Checkpoint main = load_model(a.checkpoint, m);
    m.input(a.train);
    m.input(a.valid);
    const Corpus train = load_checked(a.train, main.direction);
    const Corpus valid = load_checked(a.valid, main.direction);
    SelfLearnResult result;
    TaggingScheme scheme;
    if (c.selflearn.mode == SelfLearnMode::kOffline) {
      if (a.reverse_checkpoint.empty()) throw UsageError("offline mode needs --reverse-checkpoint");
      if (c.selflearn.pseudo_both_directions) {
        throw UsageError("pseudo data in both directions is an online-only option");
      }
      const Checkpoint rev = load_model(a.reverse_checkpoint, m);
      if (main.scheme != TaggingScheme::kSourceLengthTag ||
          rev.scheme != TaggingScheme::kSourceLengthTag) {
        throw UsageError("offline self-learning needs length-tagged checkpoints");
      }
      if (rev.vocab.hash() != main.vocab.hash()) {
        throw DataError("forward and reverse checkpoints use different vocabularies");
      }
      if (!(rev.direction.src_lang == main.direction.tgt_lang &&
            rev.direction.tgt_lang == main.direction.src_lang)) {
        throw UsageError("reverse checkpoint does not translate " + main.direction.tgt_lang +
                         " -> " + main.direction.src_lang);
      }
      scheme = TaggingScheme::kSourceLengthTag;
      result = offline_self_learning(main.params, rev.params, main.vocab, train, valid,
                                     c.selflearn, c.train);
    } else {
      if (main.scheme != TaggingScheme::kBidirectional) {
        throw UsageError("online self-learning needs a bidirectional checkpoint");
      }
      scheme = TaggingScheme::kBidirectional;
      result = online_self_learning(main.params, main.vocab, train, valid, c.selflearn,
                                    c.train);
    }
    for (const auto& e : result.log.epochs) log_epoch(e);
    const std::string report = report_json(result.report);
    json meta;
    meta["command"] = "selflearn";
    meta["config"] = config_json(c);
    meta["base_checkpoint"] = a.checkpoint;
    meta["train_log"] = json::parse(train_log_json(result.log));
    Checkpoint out{std::move(result.params), main.vocab, scheme, main.direction, meta.dump()};
    save_checkpoint(out, a.out);
    m.output(a.out);
    const fs::path report_path =
        a.report.empty() ? fs::path(a.out + ".report.json") : fs::path(a.report);
    write_file(report_path, report + "\n");
    m.output(report_path);
    if (!a.merged.empty()) {
      save_corpus(result.last_merged, a.merged);
      m.output(a.merged);
    }
    m.note("best_epoch", result.report.best_epoch);
    m.write("ok");
  } catch (const std::exception& e) {
    m.write("error", e.what());
    throw;
  }
  return 0;
}

struct EvaluateArgs {
  std::string hypotheses, references, sources, ratings, output, system = "system";
};

int cmd_evaluate(const GlobalFlags& g, const EvaluateArgs& a) {
  RunConfig c = resolve(g);
  Manifest m("evaluate", g);
  if (!a.output.empty()) m.set_default_path(a.output + ".manifest.json");
  else m.set_default_path(a.hypotheses + ".eval.manifest.json");
  m.set_config(config_json(c));
  m.set_seed(c.seed);
  try {
    m.input(a.hypotheses);
    m.input(a.references);
    m.input(a.sources);
    const auto hyps = read_side(a.hypotheses, true);
    const auto refs = read_side(a.references, true);
    const auto srcs = read_side(a.sources, false);
    if (hyps.size() != refs.size() || hyps.size() != srcs.size()) {
      throw DataError("hypotheses, references and sources differ in count (" +
                      std::to_string(hyps.size()) + ", " + std::to_string(refs.size()) +
                      ", " + std::to_string(srcs.size()) + ")");
    }
    std::vector<EvalReport> reports{evaluate(a.system, hyps, refs, srcs)};
    if (!a.ratings.empty()) {
      m.input(a.ratings);
      reports.front().human = he_mt(read_ratings_csv(a.ratings));
    }
    std::cout << render_report_text(reports);
    if (!a.output.empty()) {
      write_file(a.output, render_report_json(reports) + "\n");
      m.output(a.output);
    }
    m.write("ok");
  } catch (const std::exception& e) {
    m.write("error", e.what());
    throw;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isomt: length-controlled sequence-to-sequence translation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GlobalFlags g;
  app.add_option("--config", g.config, "JSON config file (flags override it)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--jobs", g.jobs, "sentence-parallel workers");
  app.add_flag("--deterministic", g.deterministic, "single worker, reproducible outputs");
  app.add_option("--manifest", g.manifest, "manifest path (default derives from the output)");
  app.fallthrough();

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "classify corpora and build the vocabulary");
  prepare->add_flag("--toy", pa.toy, "generate the synthetic corpus");
  prepare->add_option("--train", pa.train)->check(CLI::ExistingFile);
  prepare->add_option("--valid", pa.valid)->check(CLI::ExistingFile);
  prepare->add_option("--test", pa.test)->check(CLI::ExistingFile);
  prepare->add_option("--out-dir", pa.out_dir)->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train->add_option("--train", ta.train)->required()->check(CLI::ExistingFile);
  train->add_option("--valid", ta.valid)->required()->check(CLI::ExistingFile);
  train->add_option("--vocab", ta.vocab)->required()->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "checkpoint path")->required();
  train->add_option("--log", ta.log, "training log JSON");
  train->add_option("--scheme", ta.scheme)
      ->check(CLI::IsMember({"none", "length", "bidirectional"}));
  train->add_option("--epochs", ta.epochs);
  train->add_flag("--reverse", ta.reverse, "train the target -> source direction");

  DecodeFlags df;
  TranslateArgs tra;
  auto* translate = app.add_subcommand("translate", "decode sources with a checkpoint");
  translate->add_option("--checkpoint", tra.checkpoint)->required()->check(CLI::ExistingFile);
  translate->add_option("--input", tra.input)->required()->check(CLI::ExistingFile);
  translate->add_option("--output", tra.output)->required();
  translate->add_option("--beam", df.beam);
  translate->add_option("--nbest", df.nbest, "> 1 writes N-best JSONL");
  translate->add_option("--length-tag", df.length_tag)
      ->check(CLI::IsMember({"short", "normal", "long"}));
  translate->add_option("--max-len", df.max_len);
  translate->add_flag("--greedy", tra.greedy);
  translate->add_flag("--reverse", tra.reverse, "decode the other direction (bidirectional)");

  RerankFlags rf;
  RerankArgs ra;
  auto* rr = app.add_subcommand("rerank", "re-rank N-best lists by length synchrony");
  rr->add_option("--input", ra.input)->required()->check(CLI::ExistingFile);
  rr->add_option("--output", ra.output)->required();
  rr->add_option("--one-best", ra.one_best, "also write the top hypothesis per line");
  rr->add_option("--alpha", rf.alpha)->check(CLI::Range(0.0, 1.0));
  rr->add_option("--variant", rf.variant)->check(CLI::IsMember({"abs", "ratio"}));
  rr->add_option("--normalization", rf.normalization)->check(CLI::IsMember({"raw", "minmax"}));

  TuneArgs tu;
  RerankFlags tf;
  auto* tune = app.add_subcommand("tune-alpha", "grid-search the re-ranking weight");
  tune->add_option("--input", tu.input)->required()->check(CLI::ExistingFile);
  tune->add_option("--references", tu.references)->required()->check(CLI::ExistingFile);
  tune->add_option("--output", tu.output)->required();
  tune->add_option("--variant", tf.variant)->check(CLI::IsMember({"abs", "ratio"}));
  tune->add_option("--normalization", tf.normalization)->check(CLI::IsMember({"raw", "minmax"}));

  SelfLearnFlags sf;
  SelfLearnArgs sa;
  auto* sl = app.add_subcommand("selflearn", "fine-tune on length-tagged pseudo bitext");
  sl->add_option("--checkpoint", sa.checkpoint)->required()->check(CLI::ExistingFile);
  sl->add_option("--reverse-checkpoint", sa.reverse_checkpoint)->check(CLI::ExistingFile);
  sl->add_option("--train", sa.train)->required()->check(CLI::ExistingFile);
  sl->add_option("--valid", sa.valid)->required()->check(CLI::ExistingFile);
  sl->add_option("--out", sa.out)->required();
  sl->add_option("--report", sa.report);
  sl->add_option("--merged", sa.merged, "write the last merged corpus");
  sl->add_option("--mode", sf.mode)->check(CLI::IsMember({"offline", "online"}));
  sl->add_option("--merge", sf.merge)->check(CLI::IsMember({"union", "filter"}));
  sl->add_option("--pseudo-tag", sf.pseudo_tag)->check(CLI::IsMember({"short", "normal", "long"}));
  sl->add_option("--schedule", sf.schedule)
      ->check(CLI::IsMember({"per-epoch", "every-k-steps", "never"}));
  sl->add_option("--every-k", sf.every_k);
  sl->add_option("--epochs", sf.epochs);
  sl->add_flag("--both-directions", sf.both_directions);

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "BLEU, LR, LC, LCB and HE_MT");
  ev->add_option("--hypotheses", ea.hypotheses)->required()->check(CLI::ExistingFile);
  ev->add_option("--references", ea.references)->required()->check(CLI::ExistingFile);
  ev->add_option("--sources", ea.sources)->required()->check(CLI::ExistingFile);
  ev->add_option("--ratings", ea.ratings)->check(CLI::ExistingFile);
  ev->add_option("--output", ea.output, "JSON report");
  ev->add_option("--system", ea.system);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*prepare) return cmd_prepare(g, pa);
    if (*train) return cmd_train(g, ta);
    if (*translate) return cmd_translate(g, tra, df);
    if (*rr) return cmd_rerank(g, ra, rf);
    if (*tune) return cmd_tune_alpha(g, tu, tf);
    if (*sl) return cmd_selflearn(g, sa, sf);
    if (*ev) return cmd_evaluate(g, ea);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
