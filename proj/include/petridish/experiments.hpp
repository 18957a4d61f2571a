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


// End-to-end studies shared by the command-line tool and the acceptance
// checks: the sigmoid-slope curve study and the paired cell-search study.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "petridish/baseline.hpp"
#include "petridish/config.hpp"
#include "petridish/data_io.hpp"
#include "petridish/ground_truth.hpp"
#include "petridish/petri.hpp"
#include "petridish/search.hpp"
#include "petridish/stats.hpp"

namespace petridish {

/// n evenly spaced points from lo to hi inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * double(i) / double(n - 1);
  v.back() = hi;
  return v;
}

inline std::vector<double> slope_grid(const nlohmann::json& cfg) {
  const auto& e = cfg.at("experiment");
  return linspace(e.at("slope_min").get<double>(), e.at("slope_max").get<double>(),
                  e.at("curve_points").get<std::size_t>());
}

inline std::vector<double> inference_grid(const nlohmann::json& cfg) {
  const auto& e = cfg.at("experiment");
  return linspace(e.at("slope_min").get<double>(), e.at("slope_max").get<double>(),
                  e.at("infer_points").get<std::size_t>());
}

/// Uniform draws from [train_lo, train_hi], fixed by the ground-truth seed.
inline std::vector<double> interval_slopes(const nlohmann::json& cfg) {
  const auto& e = cfg.at("experiment");
  const double lo = e.at("train_lo").get<double>(), hi = e.at("train_hi").get<double>();
  if (!(lo > 0.0 && hi > lo)) throw ConfigError("experiment: need 0 < train_lo < train_hi");
  std::mt19937_64 rng(derive_seed(e.at("ground_truth_seed").get<std::uint64_t>(), 7));
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(e.at("train_points").get<std::size_t>());
  for (auto& c : v) c = u(rng);
  return v;
}

inline std::vector<Motif> slope_motifs(std::span<const double> cs) {
  std::vector<Motif> out;
  for (double c : cs) out.push_back(Motif::slope(c));
  return out;
}

/// Ground truth with lazy data loading and an optional on-disk cache. One
/// seed for every motif, so any two studies sharing a config agree.
class GroundTruthService {
 public:
  GroundTruthService(nlohmann::json cfg, std::uint64_t seed, const std::string& cache_path = "",
                     std::ostream* log = nullptr)
      : cfg_(std::move(cfg)), seed_(seed), log_(log) {
    mnist_cfg_ = mnist_eval_config(cfg_);
    lm_cfg_ = lm_eval_config(cfg_);
    cache_ = std::make_unique<GroundTruthCache>(cache_path, log ? log : &std::cerr);
  }

  std::uint64_t seed() const { return seed_; }

  GroundTruthRecord operator()(const Motif& m) {
    const std::string fp = m.is_slope() ? mnist_cfg_.fingerprint() : lm_cfg_.fingerprint();
    if (auto hit = cache_->lookup(m, seed_, fp)) {
      std::lock_guard lock(mu_);
      ++hits_;
      return *hit;
    }
    GroundTruthRecord r = m.is_slope() ? eval_mnist_slope(m.slope_value(), mnist_cfg_, seed_, mnist())
                                       : eval_cell(m.encoding(), lm_cfg_, seed_, corpus());
    cache_->store(r);
    std::lock_guard lock(mu_);
    ++computed_;
    if (log_) *log_ << "  ground truth " << m.key() << " -> " << format_double(r.metric) << "\n";
    return r;
  }

  Evaluator evaluator() {
    return [this](const Motif& m) { return (*this)(m); };
  }

  std::size_t computed() const { return computed_; }
  std::size_t cache_hits() const { return hits_; }

 private:
  const MnistData& mnist() {
    std::lock_guard lock(mu_);
    if (!mnist_) mnist_ = load_mnist(cfg_.at("mnist_dir").get<std::string>());
    return *mnist_;
  }
  const Corpus& corpus() {
    std::lock_guard lock(mu_);
    if (!corpus_) corpus_ = load_corpus(cfg_.at("corpus").get<std::string>());
    return *corpus_;
  }

  nlohmann::json cfg_;
  std::uint64_t seed_;
  std::ostream* log_;
  EvalConfig mnist_cfg_, lm_cfg_;
  std::unique_ptr<GroundTruthCache> cache_;
  std::optional<MnistData> mnist_;
  std::optional<Corpus> corpus_;
  std::size_t computed_ = 0, hits_ = 0;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Slope study: ground-truth curve, dish trained on an interior interval,
// baseline surrogate on the same points.

struct SlopeCurve {
  std::vector<double> slopes;
  std::vector<double> accuracy;

  /// Index of the best slope; ties go to the smaller slope.
  std::size_t peak() const {
    return std::size_t(std::max_element(accuracy.begin(), accuracy.end()) - accuracy.begin());
  }
  bool interior_peak() const { return peak() > 0 && peak() + 1 < accuracy.size(); }
  std::vector<double> losses() const {
    std::vector<double> l;
    for (double a : accuracy) l.push_back(1.0 - a);
    return l;
  }
};

inline SlopeCurve measure_curve(std::span<const double> slopes, GroundTruthService& gt, std::size_t jobs = 1) {
  SlopeCurve c;
  c.slopes.assign(slopes.begin(), slopes.end());
  for (const auto& r : evaluate_all(slope_motifs(slopes), gt.evaluator(), jobs)) c.accuracy.push_back(r.metric);
  return c;
}

struct SlopeStudyOutcome {
  std::vector<double> train_slopes, valid_slopes;
  std::vector<double> prediction;           ///< raw dish losses over the grid
  std::vector<double> ablation_prediction;  ///< same, outer_steps = 0
  std::vector<double> baseline_prediction;  ///< normalized loss over the grid
  double rho = 0, rho_ablation = 0, rho_valid = 0, baseline_rho_left = 0;
  double best_slope = 0;
  PetriModel model;
};

/// One seed of the study. `interval` is split in half at random: the dish
/// and baseline train on the first half; the second half only scores the
/// dish (rho_valid).
inline SlopeStudyOutcome slope_study(const nlohmann::json& cfg, const SlopeCurve& grid, const SlopeCurve& interval,
                                     std::uint64_t seed) {
  const auto h = slope_petri_hyper(cfg);
  const auto bp = slope_petri_blueprint(cfg);
  SlopeStudyOutcome o;
  std::mt19937_64 rng(derive_seed(seed, 9));
  const auto order = sample_without_replacement(interval.slopes.size(), interval.slopes.size(), rng);
  const std::size_t half = order.size() / 2;
  std::vector<double> train_loss, valid_loss;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < half ? o.train_slopes : o.valid_slopes).push_back(interval.slopes[order[i]]);
    (i < half ? train_loss : valid_loss).push_back(1.0 - interval.accuracy[order[i]]);
  }
  const auto train_m = slope_motifs(o.train_slopes);
  const auto grid_m = slope_motifs(grid.slopes);
  const auto grid_loss = grid.losses();

  o.model = train(train_m, train_loss, h, bp, seed);
  o.prediction = infer_raw(o.model, grid_m);
  o.rho = spearman(o.prediction, grid_loss);
  o.rho_valid = spearman(infer_raw(o.model, slope_motifs(o.valid_slopes)), valid_loss);
  o.best_slope = grid.slopes[std::size_t(std::min_element(o.prediction.begin(), o.prediction.end()) -
                                         o.prediction.begin())];

  auto h0 = h;
  h0.outer_steps = 0;
  o.ablation_prediction = infer_raw(train(train_m, train_loss, h0, bp, seed), grid_m);
  o.rho_ablation = spearman(o.ablation_prediction, grid_loss);

  const auto bm = baseline_train(o.train_slopes, normalize(train_loss), baseline_hyper(cfg), seed);
  o.baseline_prediction = baseline_predict(bm, grid.slopes);
  const std::size_t left = grid.peak();
  if (left >= 2) {
    const std::span<const double> bl(o.baseline_prediction.data(), left), gl(grid_loss.data(), left);
    o.baseline_rho_left = spearman(bl, gl);
  }
  return o;
}

/// Plot series: normalized accuracy of the ground truth and of the
/// two predictors (negated normalized losses).
inline std::vector<Curve> slope_study_curves(const SlopeCurve& grid, const SlopeStudyOutcome& o) {
  auto negated = [](std::vector<double> v) {
    for (auto& x : v) x = -x;
    return v;
  };
  auto safe_normalize = [](std::span<const double> v) {
    try {
      return normalize(v);
    } catch (const DegenerateVariance&) {
      return std::vector<double>(v.size(), 0.0);
    }
  };
  return {Curve{"ground truth", grid.slopes, safe_normalize(grid.accuracy)},
          Curve{"petri prediction", grid.slopes, negated(safe_normalize(o.prediction))},
          Curve{"baseline prediction", grid.slopes, negated(o.baseline_prediction)}};
}

// ---------------------------------------------------------------------------
// Paired cell search.

struct PairedSearchOutcome {
  std::map<SearchArm, SearchResult> results;

  /// Seeds where `a` found a loss no worse than `b`.
  bool no_worse(SearchArm a, SearchArm b) const {
    return results.at(a).best().loss() <= results.at(b).best().loss();
  }
};

/// Runs each arm from the same seed; warm starts coincide, so all arms
/// spend the same budget from the same starting ledger.
inline PairedSearchOutcome paired_search(const SearchConfig& sc, std::span<const SearchArm> arms, GroundTruthService& gt,
                                         std::uint64_t seed, std::size_t jobs = 1,
                                         const std::function<void(SearchArm, const NasState&)>& progress = {}) {
  PairedSearchOutcome out;
  for (auto arm : arms) {
    out.results[arm] = run_search(arm, sc, gt.evaluator(), seed, jobs, [&](const NasState& s) {
      if (progress) progress(arm, s);
    });
  }
  return out;
}

/// Best loss against evaluations spent, one point per iteration.
inline Curve search_curve(const SearchResult& r) {
  Curve c{to_string(r.arm), {}, {}};
  for (const auto& row : r.summary()) {
    c.x.push_back(row[2]);
    c.y.push_back(row[1]);
  }
  return c;
}

}  // namespace petridish
