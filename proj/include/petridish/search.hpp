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


// Architecture search driver: warm start, then repeatedly generate candidates
// with an elitist GA, rank them (with the Petri dish, at random, or not at
// all) and spend ground-truth evaluations on the top of the ranking.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "petridish/data_io.hpp"
#include "petridish/error.hpp"
#include "petridish/motif.hpp"
#include "petridish/petri.hpp"
#include "petridish/random.hpp"

namespace petridish {

enum class MotifSpace { slope, cell };
enum class SearchArm { petri_ga, random_select, ga_only };

inline const char* to_string(MotifSpace s) { return s == MotifSpace::slope ? "slope" : "cell"; }
inline const char* to_string(SearchArm a) {
  switch (a) {
    case SearchArm::petri_ga: return "petri-ga";
    case SearchArm::random_select: return "random-select";
    case SearchArm::ga_only: return "ga-only";
  }
  return "?";
}
inline MotifSpace parse_space(const std::string& s) {
  if (s == "slope") return MotifSpace::slope;
  if (s == "cell") return MotifSpace::cell;
  throw ConfigError("unknown motif space '" + s + "'");
}
inline SearchArm parse_arm(const std::string& s) {
  if (s == "petri-ga") return SearchArm::petri_ga;
  if (s == "random-select") return SearchArm::random_select;
  if (s == "ga-only") return SearchArm::ga_only;
  throw ConfigError("unknown search arm '" + s + "'");
}

struct GaConfig {
  std::size_t parents = 20;
  double crossover_rate = 0.3;
  double mutation_rate = 0.05;
  /// Standard deviation of slope perturbations.
  double slope_sigma = 0.05;
  double slope_max = 2.01;
  /// Attempts per requested child before giving up.
  std::size_t retries_per_child = 200;
};

struct SearchConfig {
  MotifSpace space = MotifSpace::cell;
  std::size_t warm_start = 40;
  std::size_t m = 100;
  std::size_t k = 20;
  std::size_t iterations = 5;
  /// Ground-truth evaluations allowed; 0 means warm_start + iterations * k.
  std::size_t budget = 0;
  GaConfig ga;
  PetriHyper petri;
  NetworkBlueprint blueprint = NetworkBlueprint::cell(10, 3, 10);

  void validate() const {
    if (warm_start < 2) throw ConfigError("search: warm_start must be at least 2");
    if (k == 0 || m == 0) throw ConfigError("search: m and k must be positive");
    if (k > m) throw ConfigError("search: k must not exceed m");
    if (budget && budget < warm_start) throw ConfigError("search: budget is smaller than the warm start");
    if (ga.parents == 0) throw ConfigError("search: parents must be positive");
  }
};

/// Everything known so far: the ground-truth ledger in evaluation order.
struct NasState {
  std::vector<GroundTruthRecord> evaluated;
  std::vector<std::size_t> iteration_of;  ///< iteration that produced each record (0 = warm start)
  std::size_t iteration = 0;
  std::uint64_t rng_seed = 0;
  std::size_t budget_used = 0;

  bool contains(const Motif& m) const {
    return std::any_of(evaluated.begin(), evaluated.end(), [&](const auto& r) { return r.motif.key() == m.key(); });
  }
  const GroundTruthRecord& best() const {
    if (evaluated.empty()) throw Error("no motif has been evaluated");
    return *std::min_element(evaluated.begin(), evaluated.end(), [](const auto& a, const auto& b) {
      return a.loss() < b.loss() || (a.loss() == b.loss() && a.motif.key() < b.motif.key());
    });
  }
};

using Evaluator = std::function<GroundTruthRecord(const Motif&)>;

/// Evaluates motifs on up to `jobs` threads; results come back in input order.
inline std::vector<GroundTruthRecord> evaluate_all(const std::vector<Motif>& motifs, const Evaluator& eval,
                                                   std::size_t jobs = 1) {
  std::vector<std::optional<GroundTruthRecord>> out(motifs.size());
  std::vector<std::exception_ptr> errors(motifs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < motifs.size();) {
      try {
        out[i] = eval(motifs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, motifs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<GroundTruthRecord> records;
  for (auto& r : out) records.push_back(std::move(*r));
  return records;
}

template <class Rng>
Motif random_motif(MotifSpace space, Rng& rng) {
  if (space == MotifSpace::slope) return Motif::slope(std::uniform_real_distribution<double>(0.01, 2.01)(rng));
  return Motif::cell(CellEncoding::random(rng));
}

/// n distinct random motifs, evaluated. Duplicates are redrawn.
inline NasState warm_start(MotifSpace space, std::size_t n, const Evaluator& eval, std::uint64_t seed,
                           std::size_t jobs = 1) {
  if (n < 2) throw ConfigError("warm start needs at least two motifs");
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::vector<Motif> motifs;
  std::set<std::string> keys;
  for (std::size_t tries = 0; motifs.size() < n; ++tries) {
    if (tries > 1000 * n) throw ExhaustedSpace("cannot draw " + std::to_string(n) + " distinct motifs");
    Motif m = random_motif(space, rng);
    if (keys.insert(m.key()).second) motifs.push_back(std::move(m));
  }
  NasState s;
  s.rng_seed = seed;
  s.evaluated = evaluate_all(motifs, eval, jobs);
  s.iteration_of.assign(n, 0);
  s.budget_used = n;
  return s;
}

/// The elitist GA: children of the best `ga.parents` evaluated motifs that
/// differ from everything evaluated so far and from each other.
inline std::vector<Motif> generate(const NasState& state, std::size_t m, MotifSpace space, const GaConfig& ga,
                                   std::uint64_t seed) {
  if (state.evaluated.empty()) throw Error("generate needs evaluated motifs");
  std::vector<const GroundTruthRecord*> ranked;
  for (const auto& r : state.evaluated) ranked.push_back(&r);
  std::stable_sort(ranked.begin(), ranked.end(), [](auto* a, auto* b) {
    return a->loss() < b->loss() || (a->loss() == b->loss() && a->motif.key() < b->motif.key());
  });
  ranked.resize(std::min(ranked.size(), ga.parents));

  std::set<std::string> seen;
  for (const auto& r : state.evaluated) seen.insert(r.motif.key());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, ranked.size() - 1);
  std::vector<Motif> children;
  for (std::size_t tries = 0; children.size() < m; ++tries) {
    if (tries >= ga.retries_per_child * m)
      throw ExhaustedSpace("produced only " + std::to_string(children.size()) + " of " + std::to_string(m) +
                           " new motifs");
    const Motif& a = ranked[pick(rng)]->motif;
    const Motif& b = ranked[pick(rng)]->motif;
    std::optional<Motif> child;
    if (space == MotifSpace::slope) {
      if (!a.is_slope()) throw MixedVariants("slope search over non-slope motifs");
      const double c = a.slope_value() + std::normal_distribution<double>(0.0, ga.slope_sigma)(rng);
      child = Motif::slope(std::clamp(c, 1e-3, ga.slope_max));
    } else {
      if (!a.is_cell() || !b.is_cell()) throw MixedVariants("cell search over non-cell motifs");
      const auto crossed = crossover(a.encoding(), b.encoding(), ga.crossover_rate, rng());
      child = Motif::cell(mutate(crossed, ga.mutation_rate, rng()));
    }
    if (seen.insert(child->key()).second) children.push_back(std::move(*child));
  }
  return children;
}

/// Indices of the k smallest scores; ties go to the smaller motif key.
inline std::vector<std::size_t> top_k(const std::vector<double>& scores, const std::vector<Motif>& motifs,
                                      std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return scores[a] < scores[b] || (scores[a] == scores[b] && motifs[a].key() < motifs[b].key());
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

/// One round: generate, rank, evaluate the top k, append to the ledger.
inline NasState nas_iteration(NasState state, SearchArm arm, const SearchConfig& cfg, const Evaluator& eval,
                              std::size_t jobs = 1) {
  cfg.validate();
  const std::size_t it = state.iteration + 1;
  const std::uint64_t seed = derive_seed(state.rng_seed, 1000 + it);
  std::vector<Motif> chosen;
  if (arm == SearchArm::ga_only) {
    chosen = generate(state, cfg.k, cfg.space, cfg.ga, derive_seed(seed, 0));
  } else {
    auto candidates = generate(state, cfg.m, cfg.space, cfg.ga, derive_seed(seed, 0));
    std::vector<double> scores;
    if (arm == SearchArm::petri_ga) {
      std::vector<Motif> motifs;
      std::vector<double> losses;
      for (const auto& r : state.evaluated) {
        motifs.push_back(r.motif);
        losses.push_back(r.loss());
      }
      const auto model = train(motifs, losses, cfg.petri, cfg.blueprint, derive_seed(seed, 1));
      scores = infer_raw(model, candidates);
    } else {
      std::mt19937_64 rng(derive_seed(seed, 2));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t i = 0; i < candidates.size(); ++i) scores.push_back(u(rng));
    }
    for (auto i : top_k(scores, candidates, cfg.k)) chosen.push_back(candidates[i]);
  }
  auto records = evaluate_all(chosen, eval, jobs);
  for (auto& r : records) {
    state.evaluated.push_back(std::move(r));
    state.iteration_of.push_back(it);
  }
  state.budget_used += chosen.size();
  state.iteration = it;
  return state;
}

struct SearchResult {
  NasState state;
  SearchArm arm = SearchArm::petri_ga;

  const GroundTruthRecord& best() const { return state.best(); }

  /// One JSON line per ground-truth evaluation, with the running best.
  std::string trajectory_jsonl() const {
    std::string out;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < state.evaluated.size(); ++i) {
      const auto& r = state.evaluated[i];
      best = std::min(best, r.loss());
      nlohmann::json j = {{"arm", to_string(arm)},
                          {"evaluation", i + 1},
                          {"iteration", state.iteration_of[i]},
                          {"record", r.to_json()},
                          {"best_loss", best}};
      out += j.dump() + "\n";
    }
    return out;
  }

  /// Running best after each iteration: (iteration, best loss, budget used).
  std::vector<std::array<double, 3>> summary() const {
    std::vector<std::array<double, 3>> rows;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < state.evaluated.size(); ++i) {
      best = std::min(best, state.evaluated[i].loss());
      const bool last_of_iteration =
          i + 1 == state.evaluated.size() || state.iteration_of[i + 1] != state.iteration_of[i];
      if (last_of_iteration) rows.push_back({double(state.iteration_of[i]), best, double(i + 1)});
    }
    return rows;
  }

  std::string summary_csv() const {
    std::string out = "iteration,best_loss,budget\n";
    for (const auto& r : summary())
      out += std::to_string(std::size_t(r[0])) + "," + format_double(r[1]) + "," + std::to_string(std::size_t(r[2])) + "\n";
    return out;
  }
};

/// Warm start plus up to cfg.iterations rounds, never exceeding the budget.
inline SearchResult run_search(SearchArm arm, const SearchConfig& cfg, const Evaluator& eval, std::uint64_t seed,
                               std::size_t jobs = 1,
                               const std::function<void(const NasState&)>& progress = {}) {
  cfg.validate();
  const std::size_t budget = cfg.budget ? cfg.budget : cfg.warm_start + cfg.iterations * cfg.k;
  SearchResult res;
  res.arm = arm;
  res.state = warm_start(cfg.space, cfg.warm_start, eval, seed, jobs);
  if (progress) progress(res.state);
  for (std::size_t i = 0; i < cfg.iterations && res.state.budget_used + cfg.k <= budget; ++i) {
    res.state = nas_iteration(std::move(res.state), arm, cfg, eval, jobs);
    if (progress) progress(res.state);
  }
  return res;
}

}  // namespace petridish
