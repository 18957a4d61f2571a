// Copyright 2026 The petridish Authors.
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


// Desk-scale ground truth: an MNIST MLP whose hidden sigmoids use the motif's
// slope, and a small character-level language model built around a cell
// motif. Results are cached in an append-only JSON-lines file.

#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "petridish/autodiff.hpp"
#include "petridish/data_io.hpp"
#include "petridish/error.hpp"
#include "petridish/motif.hpp"
#include "petridish/nn.hpp"
#include "petridish/random.hpp"

namespace petridish {

enum class TaskKind { mnist_slope, char_lm };

inline const char* to_string(TaskKind t) { return t == TaskKind::mnist_slope ? "mnist-slope" : "char-lm"; }

struct EvalConfig {
  TaskKind task = TaskKind::mnist_slope;
  /// Passes over the training subset (mnist-slope).
  std::size_t epochs = 10;
  /// Optimizer steps (char-lm).
  std::size_t steps = 150;
  std::size_t batch_size = 50;
  /// Sequence length (char-lm).
  std::size_t seq_len = 16;
  double lr = 0.01;
  double l2 = 1e-5;
  std::size_t width = 100;
  double init_scale = 1.0;
  std::size_t train_subset_size = 5000;
  std::size_t valid_subset_size = 2000;
  std::size_t repeats = 3;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("eval config: " + m); };
    if (epochs == 0 || steps == 0 || batch_size == 0 || seq_len == 0 || width == 0 || repeats == 0 ||
        train_subset_size == 0 || valid_subset_size == 0)
      fail("counts must be positive");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (!(l2 >= 0.0)) fail("l2 must be nonnegative");
    if (!(init_scale > 0.0)) fail("init_scale must be positive");
  }

  nlohmann::json to_json() const {
    return {{"task", to_string(task)},
            {"epochs", epochs},
            {"steps", steps},
            {"batch_size", batch_size},
            {"seq_len", seq_len},
            {"lr", lr},
            {"l2", l2},
            {"width", width},
            {"init_scale", init_scale},
            {"train_subset_size", train_subset_size},
            {"valid_subset_size", valid_subset_size},
            {"repeats", repeats}};
  }
  static EvalConfig from_json(const nlohmann::json& j) {
    EvalConfig c;
    const auto task = j.at("task").get<std::string>();
    if (task == "mnist-slope") c.task = TaskKind::mnist_slope;
    else if (task == "char-lm") c.task = TaskKind::char_lm;
    else throw ConfigError("unknown ground-truth task '" + task + "'");
    c.epochs = j.at("epochs").get<std::size_t>();
    c.steps = j.at("steps").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seq_len = j.at("seq_len").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.l2 = j.at("l2").get<double>();
    c.width = j.at("width").get<std::size_t>();
    c.init_scale = j.at("init_scale").get<double>();
    c.train_subset_size = j.at("train_subset_size").get<std::size_t>();
    c.valid_subset_size = j.at("valid_subset_size").get<std::size_t>();
    c.repeats = j.at("repeats").get<std::size_t>();
    c.validate();
    return c;
  }

  /// FNV-1a over the canonical JSON, as 16 hex digits.
  std::string fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json().dump()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

namespace detail {

inline std::size_t argmax_row(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < n; ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

inline Array gather_rows(const Array& src, const std::vector<std::size_t>& rows) {
  const std::size_t w = src.shape[1];
  Array out({rows.size(), w});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(src.data.begin() + std::ptrdiff_t(rows[r] * w), w, out.data.begin() + std::ptrdiff_t(r * w));
  return out;
}

}  // namespace detail

/// Validation accuracy of one MNIST training run.
inline double mnist_accuracy_once(double c, const EvalConfig& cfg, const MnistData& data,
                                  std::uint64_t seed) {
  const auto bp = NetworkBlueprint::mlp({data.train.images.shape[1], cfg.width, 10}, cfg.init_scale);
  const std::vector<ActSpec> act = {{Activation::sigmoid, c}};
  ParamSet params = init_params(bp, derive_seed(seed, 0));
  OptimizerConfig oc;
  oc.kind = OptimizerKind::adam;
  oc.learning_rate = cfg.lr;
  oc.l2_penalty = cfg.l2;
  OptimizerState opt(oc);
  std::mt19937_64 rng(derive_seed(seed, 1));

  const std::size_t n = std::min(cfg.train_subset_size, data.train.labels.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = sample_without_replacement(n, n, rng);
    for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
      const std::vector<std::size_t> rows(order.begin() + std::ptrdiff_t(lo),
                                          order.begin() + std::ptrdiff_t(std::min(n, lo + cfg.batch_size)));
      const Array x = detail::gather_rows(data.train.images, rows);
      std::vector<int> y;
      for (auto r : rows) y.push_back(data.train.labels[r]);
      train_step(params, opt, [&](Graph& g, std::span<const Tensor> p) {
        return reshape(cross_entropy_per_block(mlp_forward(bp, p, g.constant(x), act).logits, y), {1});
      });
    }
  }

  const std::size_t nv = std::min(cfg.valid_subset_size, data.valid.labels.size());
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < nv; lo += 500) {
    std::vector<std::size_t> rows;
    for (std::size_t r = lo; r < std::min(nv, lo + 500); ++r) rows.push_back(r);
    Graph g;
    auto p = param_leaves(g, params, false);
    const Array logits = mlp_forward(bp, p, g.constant(detail::gather_rows(data.valid.images, rows)), act).logits.value();
    for (std::size_t i = 0; i < rows.size(); ++i)
      correct += int(detail::argmax_row(&logits.data[i * 10], 10)) == data.valid.labels[rows[i]];
  }
  return double(correct) / double(nv);
}

/// Mean validation accuracy over cfg.repeats runs.
inline GroundTruthRecord eval_mnist_slope(double c, const EvalConfig& cfg, std::uint64_t seed,
                                          const MnistData& data) {
  cfg.validate();
  if (cfg.task != TaskKind::mnist_slope) throw ConfigError("eval_mnist_slope needs an mnist-slope config");
  GroundTruthRecord rec;
  rec.motif = Motif::slope(c);
  rec.metric_kind = MetricKind::accuracy;
  rec.seed = seed;
  rec.config_fingerprint = cfg.fingerprint();
  double total = 0.0;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t s = derive_seed(seed, r);
    rec.repeat_seeds.push_back(s);
    total += mnist_accuracy_once(c, cfg, data, s);
  }
  rec.metric = total / double(cfg.repeats);
  return rec;
}

namespace detail {

// One-hot inputs (batch, time, vocab) and time-major next-character targets
// for windows starting at `starts`.
inline std::pair<Array, std::vector<int>> lm_batch(const Corpus& corpus, const std::vector<std::size_t>& starts,
                                                   std::size_t seq_len) {
  const std::size_t B = starts.size(), V = corpus.vocab_size();
  Array x({B, seq_len, V});
  std::vector<int> y(B * seq_len);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < seq_len; ++t) {
      x.data[(b * seq_len + t) * V + std::size_t(corpus.ids[starts[b] + t])] = 1.0;
      y[t * B + b] = corpus.ids[starts[b] + t + 1];
    }
  return {std::move(x), std::move(y)};
}

}  // namespace detail

/// Validation cross-entropy (nats per character) of a language model built
/// around `enc`. The last tenth of the corpus is held out.
inline double char_lm_loss_once(const CellEncoding& enc, const EvalConfig& cfg, const Corpus& corpus,
                                std::uint64_t seed) {
  const std::size_t V = corpus.vocab_size(), T = cfg.seq_len;
  const std::size_t split = corpus.ids.size() * 9 / 10;
  if (split < T + 2 || corpus.ids.size() - split < T + 2) throw DataUnavailable("corpus too short");
  const auto bp = NetworkBlueprint::cell(V, cfg.width, V, cfg.init_scale);
  const CellEncoding encs[] = {enc};
  ParamSet params = init_params(bp, derive_seed(seed, 0));
  OptimizerConfig oc;
  oc.kind = OptimizerKind::adam;
  oc.learning_rate = cfg.lr;
  oc.l2_penalty = cfg.l2;
  OptimizerState opt(oc);
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::uniform_int_distribution<std::size_t> start(0, split - T - 2);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> starts(cfg.batch_size);
    for (auto& s : starts) s = start(rng);
    const auto [x, y] = detail::lm_batch(corpus, starts, T);
    train_step(params, opt, [&](Graph& g, std::span<const Tensor> p) {
      return reshape(cross_entropy_per_block(cell_forward(bp, p, g.constant(x), encs), y), {1});
    });
  }

  // Evenly spaced held-out windows, identical for every motif and seed.
  const std::size_t span = corpus.ids.size() - split - T - 1;
  const std::size_t windows = std::min(cfg.valid_subset_size, span);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t lo = 0; lo < windows; lo += 64) {
    std::vector<std::size_t> starts;
    for (std::size_t w = lo; w < std::min(windows, lo + 64); ++w) starts.push_back(split + w * span / windows);
    const auto [x, y] = detail::lm_batch(corpus, starts, T);
    Graph g;
    auto p = param_leaves(g, params, false);
    total += cross_entropy_per_block(cell_forward(bp, p, g.constant(x), encs), y).item() * double(starts.size());
    count += starts.size();
  }
  const double loss = total / double(count);
  if (!std::isfinite(loss)) throw NonFiniteLoss("validation loss is not finite");
  return loss;
}

inline GroundTruthRecord eval_cell(const CellEncoding& enc, const EvalConfig& cfg, std::uint64_t seed,
                                   const Corpus& corpus) {
  cfg.validate();
  if (cfg.task != TaskKind::char_lm) throw ConfigError("eval_cell needs a char-lm config");
  enc.validate();
  GroundTruthRecord rec;
  rec.motif = Motif::cell(enc);
  rec.metric_kind = MetricKind::loss;
  rec.seed = seed;
  rec.config_fingerprint = cfg.fingerprint();
  double total = 0.0;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t s = derive_seed(seed, r);
    rec.repeat_seeds.push_back(s);
    total += char_lm_loss_once(enc, cfg, corpus, s);
  }
  rec.metric = total / double(cfg.repeats);
  return rec;
}

/// Content-addressed store of ground-truth records backed by a JSON-lines
/// file. Corrupt lines are skipped with a warning. Safe to share between
/// threads; each store appends one whole line.
class GroundTruthCache {
 public:
  GroundTruthCache() = default;
  explicit GroundTruthCache(fs::path path, std::ostream* warnings = &std::cerr) : path_(std::move(path)) {
    if (!fs::exists(path_)) return;
    std::istringstream in(read_file(path_));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        insert(parse_line(line));
      } catch (const CorruptCacheLine& e) {
        ++corrupt_;
        if (warnings) *warnings << "warning: " << path_.string() << ":" << n << ": " << e.what() << "\n";
      }
    }
  }

  static std::string key(const Motif& motif, std::uint64_t seed, const std::string& fingerprint) {
    return motif.key() + "|" + std::to_string(seed) + "|" + fingerprint;
  }

  static GroundTruthRecord parse_line(const std::string& line) {
    try {
      return GroundTruthRecord::from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw CorruptCacheLine(std::string("unreadable cache line: ") + e.what());
    }
  }

  std::optional<GroundTruthRecord> lookup(const Motif& motif, std::uint64_t seed,
                                          const std::string& fingerprint) const {
    std::lock_guard lock(mu_);
    auto it = records_.find(key(motif, seed, fingerprint));
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  void store(const GroundTruthRecord& r) {
    std::lock_guard lock(mu_);
    insert(r);
    if (path_.empty()) return;
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << r.to_json().dump() + "\n";
    out.flush();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }
  std::size_t corrupt_lines() const { return corrupt_; }

 private:
  void insert(const GroundTruthRecord& r) { records_[key(r.motif, r.seed, r.config_fingerprint)] = r; }

  fs::path path_;
  std::map<std::string, GroundTruthRecord> records_;
  std::size_t corrupt_ = 0;
  mutable std::mutex mu_;
};

}  // namespace petridish
