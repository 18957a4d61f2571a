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


// Acceptance checks. Prints one PASS or FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "petridish/experiments.hpp"

#ifndef PETRIDISH_CLI
#define PETRIDISH_CLI "petridish"
#endif

namespace pd = petridish;
using pd::Array;
using pd::Motif;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double cpu_seconds() { return double(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) { return pd::median(std::move(v)); }

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ||a - b|| / max(||a||, ||b||); two vectors that both vanish agree.
double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double denom = std::max(norm(a), norm(b));
  return denom < 1e-9 ? 0.0 : norm(d) / denom;
}

// ---------------------------------------------------------------------------
// 1. Hypergradient against central differences.

struct Bilevel {
  pd::NetworkBlueprint bp = pd::NetworkBlueprint::mlp({10, 1, 10});
  pd::PetriHyper h;
  std::vector<Motif> ms;
  std::vector<double> gt;
  pd::PetriModel model;

  Bilevel(std::vector<double> cs, std::vector<double> truth) : ms(pd::slope_motifs(cs)), gt(std::move(truth)) {
    h.inner_steps = 3;
    h.samples = 10;
    h.outer_l2 = 0.0;
    model = pd::init_model(bp, h, 11);
    std::mt19937_64 rng(2);
    for (auto& v : model.synthetic.x_valid.data) v += 0.3 * std::normal_distribution<double>()(rng);
  }

  // Outer loss, or one motif's inner loss when motif >= 0.
  double objective(const Array& xt, const Array& xv, int motif) const {
    auto d = model.synthetic;
    d.x_train = xt;
    d.x_valid = xv;
    const auto inner = pd::inner_loop(pd::instantiate(ms, bp, model.theta_init_seed), d, h, false);
    return motif < 0 ? pd::outer_loss_value(inner, gt) : inner[std::size_t(motif)];
  }

  std::vector<double> fd(bool train_set, int motif) const {
    const Array& x0 = train_set ? model.synthetic.x_train : model.synthetic.x_valid;
    std::vector<double> g(x0.size());
    const double eps = 1e-5;
    for (std::size_t i = 0; i < x0.size(); ++i) {
      Array p = x0, m = x0;
      p.data[i] += eps;
      m.data[i] -= eps;
      const double fp = train_set ? objective(p, model.synthetic.x_valid, motif)
                                  : objective(model.synthetic.x_train, p, motif);
      const double fm = train_set ? objective(m, model.synthetic.x_valid, motif)
                                  : objective(model.synthetic.x_train, m, motif);
      g[i] = (fp - fm) / (2 * eps);
    }
    return g;
  }

  // Unrolled derivative of one inner loss.
  std::pair<std::vector<double>, std::vector<double>> inner_gradient(int motif) const {
    pd::Graph g;
    auto xt = g.variable(model.synthetic.x_train);
    auto xv = g.variable(model.synthetic.x_valid);
    const auto nets = pd::instantiate(ms, bp, model.theta_init_seed);
    auto inner = pd::inner_loop_graph(pd::build_super_network(nets), xt, xv, model.synthetic, h);
    const pd::Tensor wrt[] = {xt, xv};
    auto grads = pd::backward(inner[std::size_t(motif)], wrt);
    return {grads[0].value().data, grads[1].value().data};
  }
};

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  // The literal instance: two motifs.
  const Bilevel two({0.3, 1.2}, {0.2, 0.5});
  const auto hg2 = pd::hypergradient(two.model, two.ms, two.gt);
  worst = std::max(worst, relative_error(hg2.d_x_train.data, two.fd(true, -1)));
  worst = std::max(worst, relative_error(hg2.d_x_valid.data, two.fd(false, -1)));
  const double vanish = std::max(norm(hg2.d_x_train.data), norm(hg2.d_x_valid.data));
  // Two z-scores are always +-1, so the outer gradient above vanishes; the
  // per-motif inner-loss gradients it is built from are checked as well.
  double inner_worst = 0.0;
  for (int m = 0; m < 2; ++m) {
    const auto [gt, gv] = two.inner_gradient(m);
    inner_worst = std::max(inner_worst, relative_error(gt, two.fd(true, m)));
    inner_worst = std::max(inner_worst, relative_error(gv, two.fd(false, m)));
  }
  // Three motifs give a non-vanishing outer gradient.
  const Bilevel three({0.3, 1.2, 0.7}, {0.2, 0.5, 0.3});
  const auto hg3 = pd::hypergradient(three.model, three.ms, three.gt);
  double worst3 = std::max(relative_error(hg3.d_x_train.data, three.fd(true, -1)),
                           relative_error(hg3.d_x_valid.data, three.fd(false, -1)));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = worst <= 1e-4 && inner_worst <= 1e-4 && worst3 <= 1e-4 && secs < 10.0;
  return {pass, "2-motif outer rel err " + fmt("%.2e", worst) + " (gradient norm " + fmt("%.1e", vanish) +
                    "), 2-motif inner-loss rel err " + fmt("%.2e", inner_worst) + ", 3-motif outer rel err " +
                    fmt("%.2e", worst3) + ", " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Super-network against independent training.

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg2 = pd::resolve_config("table2", nullptr, {});
  const auto cfg4 = pd::resolve_config("table4", nullptr, {});
  double worst = 0.0;
  std::mt19937_64 rng(21);
  for (bool cell : {false, true}) {
    const auto bp = cell ? pd::cell_petri_blueprint(cfg4) : pd::slope_petri_blueprint(cfg2);
    const auto h = cell ? pd::cell_petri_hyper(cfg4) : pd::slope_petri_hyper(cfg2);
    for (std::size_t n : {1u, 3u, 8u}) {
      std::vector<Motif> ms;
      for (std::size_t i = 0; i < n; ++i)
        ms.push_back(cell ? Motif::cell(pd::CellEncoding::random(rng))
                          : Motif::slope(std::uniform_real_distribution<double>(0.01, 2.01)(rng)));
      const auto data = pd::init_synthetic(bp, h, 5 + n);
      const auto nets = pd::instantiate(ms, bp, 9);
      const auto super = pd::inner_loop(nets, data, h, false);
      std::vector<double> graph;
      if (!cell || n <= 3) graph = pd::inner_loop(nets, data, h, true);
      for (std::size_t i = 0; i < n; ++i) {
        const double solo = pd::inner_loop_plain(nets[i], data, h)[0];
        worst = std::max(worst, std::abs(super[i] - solo));
        if (!graph.empty()) worst = std::max(worst, std::abs(graph[i] - solo));
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-10 && secs < 30.0, "max |super - independent| " + fmt("%.2e", worst) +
                                             " over mlp/cell, N in {1,3,8}, " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 3 and 4. Slope study.

struct SlopeRun {
  pd::SlopeCurve grid;
  std::vector<pd::SlopeStudyOutcome> seeds;
  double cpu = 0.0;
};

const SlopeRun& slope_run() {
  static const SlopeRun run = [] {
    SlopeRun r;
    const double c0 = cpu_seconds();
    const auto cfg = pd::resolve_config("desk-scale", nullptr, {});
    pd::GroundTruthService gt(cfg, cfg["experiment"]["ground_truth_seed"].get<std::uint64_t>());
    r.grid = pd::measure_curve(pd::slope_grid(cfg), gt);
    const auto interval = pd::measure_curve(pd::interval_slopes(cfg), gt);
    for (std::uint64_t s = 0; s < 3; ++s) r.seeds.push_back(pd::slope_study(cfg, r.grid, interval, s));
    r.cpu = cpu_seconds() - c0;
    return r;
  }();
  return run;
}

Outcome criterion3() {
  const auto& r = slope_run();
  std::vector<double> rho, best, left;
  for (const auto& o : r.seeds) {
    rho.push_back(o.rho);
    best.push_back(o.best_slope);
    left.push_back(o.baseline_rho_left);
  }
  const double mr = median(rho), mb = median(best), ml = median(left);
  const bool pass = r.grid.interior_peak() && mr >= 0.7 && mb > 0.05 && mb < 0.45 && ml <= 0.0 &&
                    r.cpu <= 45 * 60.0;
  std::ostringstream d;
  d << "ground-truth peak at c=" << fmt("%.3f", r.grid.slopes[r.grid.peak()])
    << (r.grid.interior_peak() ? " (interior)" : " (at an end)") << "; dish spearman median " << fmt("%.3f", mr)
    << " [";
  for (double v : rho) d << fmt(" %.3f", v);
  d << " ]; best predicted slope median " << fmt("%.3f", mb) << " [";
  for (double v : best) d << fmt(" %.3f", v);
  d << " ]; baseline spearman left of peak median " << fmt("%.3f", ml) << "; " << fmt("%.1f", r.cpu / 60)
    << " CPU-min";
  return {pass, d.str()};
}

Outcome criterion4() {
  const auto& r = slope_run();
  std::vector<double> rho, abl;
  for (const auto& o : r.seeds) {
    rho.push_back(o.rho);
    abl.push_back(o.rho_ablation);
  }
  const double drop = median(rho) - median(abl);
  std::ostringstream d;
  d << "spearman trained " << fmt("%.3f", median(rho)) << " vs random synthetic data " << fmt("%.3f", median(abl))
    << " [";
  for (double v : abl) d << fmt(" %.3f", v);
  d << " ]; drop " << fmt("%.3f", drop);
  return {drop >= 0.15, d.str()};
}

// ---------------------------------------------------------------------------
// 5. Affine invariance.

Outcome criterion5() {
  const auto bp = pd::NetworkBlueprint::mlp({10, 1, 10});
  pd::PetriHyper h;
  h.inner_steps = 30;
  h.outer_steps = 6;
  h.outer_lr = 0.05;
  std::vector<double> cs, loss;
  for (int i = 0; i < 9; ++i) {
    cs.push_back(0.2 + 0.2 * i);
    loss.push_back(0.08 + 0.03 * std::pow(std::log(cs.back() / 0.3), 2));
  }
  const auto ms = pd::slope_motifs(cs);
  const auto ref = pd::train(ms, loss, h, bp, 4).to_json().dump();
  bool identical = true;
  for (auto [a, b] : std::vector<std::pair<double, double>>{{2.5, -1.0}, {0.01, 3.0}, {1000.0, 7.25}}) {
    std::vector<double> scaled;
    for (double l : loss) scaled.push_back(a * l + b);
    identical &= pd::train(ms, scaled, h, bp, 4).to_json().dump() == ref;
  }
  double worst = 0.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> l(2 + std::size_t(t % 30));
    for (auto& v : l) v = u(rng);
    const double a = std::exp(u(rng)), b = u(rng);
    std::vector<double> g;
    for (double v : l) g.push_back(a * v + b);
    worst = std::max(worst, pd::outer_loss_value(l, g));
  }
  return {identical && worst <= 1e-12, std::string("models under 3 affine rescalings ") +
                                           (identical ? "bitwise identical" : "DIFFER") +
                                           "; max outer loss of affine-consistent pairs " + fmt("%.1e", worst)};
}

// ---------------------------------------------------------------------------
// 6. GA statistics.

Outcome criterion6() {
  std::size_t changed = 0, positions = 0;
  std::mt19937_64 rng(6);
  for (std::uint64_t s = 0; positions < 10000; ++s) {
    const auto enc = pd::CellEncoding::random(rng);
    const auto before = enc.to_string(), after = pd::mutate(enc, 0.05, s).to_string();
    for (std::size_t p = 0; p < before.size(); ++p) changed += before[p] != after[p];
    positions += before.size();
  }
  const double frac = double(changed) / double(positions);

  std::size_t valid = 0, total = 0;
  auto state = pd::warm_start(pd::MotifSpace::cell, 20, [](const Motif& m) {
    pd::GroundTruthRecord r;
    r.motif = m;
    r.metric = double(m.encoding().loose_ends().size());
    return r;
  }, 6);
  for (std::uint64_t s = 0; total < 1000; ++s)
    for (const auto& m : pd::generate(state, 50, pd::MotifSpace::cell, pd::GaConfig{}, s)) {
      ++total;
      try {
        m.encoding().validate();
        pd::CellEncoding::from_string(m.encoding().to_string());
        ++valid;
      } catch (const pd::Error&) {
      }
    }
  return {frac >= 0.04 && frac <= 0.06 && valid == total,
          "changed fraction " + fmt("%.4f", frac) + " over " + std::to_string(positions) + " positions; " +
              std::to_string(valid) + "/" + std::to_string(total) + " generated encodings valid"};
}

// ---------------------------------------------------------------------------
// 7. Paired cell search.

Outcome criterion7() {
  const double c0 = cpu_seconds();
  const auto cfg = pd::resolve_config("desk-scale", nullptr,
                                      {"search.space=cell", "search.warm_start=8", "search.m=30", "search.k=6",
                                       "search.iterations=3"});
  const auto sc = pd::search_config(cfg);
  pd::GroundTruthService gt(cfg, cfg["experiment"]["ground_truth_seed"].get<std::uint64_t>());
  const pd::SearchArm arms[] = {pd::SearchArm::petri_ga, pd::SearchArm::random_select};
  int wins = 0;
  std::ostringstream d;
  d << "petri-ga vs random-select best loss:";
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto out = pd::paired_search(sc, arms, gt, 100 + s);
    const double a = out.results.at(pd::SearchArm::petri_ga).best().loss();
    const double b = out.results.at(pd::SearchArm::random_select).best().loss();
    wins += a <= b;
    d << fmt(" %.4f", a) << fmt("/%.4f", b);
  }
  const double cpu = cpu_seconds() - c0;
  d << "; no worse in " << wins << " of 5 seeds; " << gt.computed() << " evaluations; " << fmt("%.1f", cpu / 60)
    << " CPU-min";
  return {wins >= 4 && cpu <= 60 * 60.0, d.str()};
}

// ---------------------------------------------------------------------------
// 8. CLI determinism.

std::string slurp_tree(const pd::fs::path& dir) {
  std::vector<pd::fs::path> files;
  for (const auto& e : pd::fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(pd::fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += "== " + f.string() + "\n" + pd::read_file(dir / f);
  return all;
}

Outcome criterion8() {
  const auto root = pd::fs::temp_directory_path() / ("petridish_acceptance_" + std::to_string(::getpid()));
  pd::fs::remove_all(root);
  const std::string small =
      " --set ground_truth.repeats=1 --set ground_truth.epochs=1 --set ground_truth.train_subset_size=500"
      " --set ground_truth.valid_subset_size=300 --set petri.inner_steps=20 --set petri.outer_steps=3"
      " --set char_lm.steps=4 --set char_lm.valid_subset_size=64 --set cell_petri.inner_steps=3"
      " --set cell_petri.outer_steps=2 --set search.warm_start=3 --set search.m=5 --set search.k=2"
      " --set search.iterations=2 --set experiment.curve_points=6 --set experiment.train_points=6"
      " --set experiment.infer_points=7 --set experiment.train_lo=0.2";
  const pd::fs::path ledger = root / "a" / "gt" / "ledger.jsonl";
  const pd::fs::path model = root / "a" / "train" / "petri_model.json";
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gt", "ground-truth --slopes 0.1,0.6,1.1,1.6"},
      {"gt-cell", "ground-truth --space cell --random 3"},
      {"train", "petri train --ledger " + ledger.string()},
      {"ablation", "petri train --ablation-random-data --ledger " + ledger.string()},
      {"infer", "petri infer --model " + model.string()},
      {"baseline", "baseline --ledger " + ledger.string()},
      {"search", "search --arm all"},
      {"study", "slope-study"},
  };
  std::vector<std::string> bad;
  for (const char* run : {"a", "b"})
    for (const auto& [name, args] : commands) {
      const auto out = root / run / name;
      const std::string cmd = std::string(PETRIDISH_CLI) + " --seed 3" + small + " --out " + out.string() + " " +
                              args + " > /dev/null 2> " + (root / (std::string(run) + name + ".log")).string();
      pd::fs::create_directories(root);
      if (std::system(cmd.c_str()) != 0) bad.push_back(name + std::string(" failed in run ") + run);
    }
  std::size_t compared = 0;
  for (const auto& [name, args] : commands) {
    if (!pd::fs::exists(root / "a" / name) || !pd::fs::exists(root / "b" / name)) continue;
    ++compared;
    if (slurp_tree(root / "a" / name) != slurp_tree(root / "b" / name)) bad.push_back(name + " differs");
  }
  std::string detail = std::to_string(compared) + " of " + std::to_string(commands.size()) +
                       " subcommand outputs byte-identical across reruns";
  if (!bad.empty()) {
    detail = "problems:";
    for (const auto& b : bad) detail += " [" + b + "]";
  } else {
    pd::fs::remove_all(root);
  }
  return {bad.empty() && compared == commands.size(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"hypergradient matches finite differences", criterion1},
      {"super-network equals independent training", criterion2},
      {"slope curve reproduced by the dish", criterion3},
      {"outer loop ablation", criterion4},
      {"affine invariance", criterion5},
      {"GA operator statistics", criterion6},
      {"paired cell search", criterion7},
      {"CLI determinism", criterion8},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = int(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
