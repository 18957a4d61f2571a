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


// petridish: command-line entry point.
//
//   petridish [global options] ground-truth | petri train | petri infer |
//             baseline | search | slope-study
//
// Exit codes: 0 success, 1 other failure, 2 configuration error,
// 3 numeric divergence, 4 data unavailable.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "petridish/experiments.hpp"

using namespace petridish;

namespace {

struct Globals {
  std::string profile;
  std::string config_file;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string out;
  std::string cache;
  std::size_t jobs = 1;
  bool dry_run = false;
};

nlohmann::json resolved(const Globals& g) {
  nlohmann::json file;
  if (!g.config_file.empty()) {
    try {
      file = nlohmann::json::parse(read_file(g.config_file));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(g.config_file + ": " + e.what());
    }
  }
  return resolve_config(g.profile, file, g.overrides);
}

fs::path out_dir(const Globals& g, const std::string& name) {
  return g.out.empty() ? fs::path("runs") / (name + "-seed" + std::to_string(g.seed)) : fs::path(g.out);
}

RunArtifact artifact(const nlohmann::json& cfg, const Globals& g, const std::string& command) {
  RunArtifact a;
  a.config = {{"command", command}, {"resolved", cfg}};
  a.seeds = {g.seed};
  return a;
}

std::vector<GroundTruthRecord> read_ledger(const std::string& path) {
  auto records = records_from_jsonl(read_file(path));
  if (records.empty()) throw DataUnavailable(path + " holds no records");
  return records;
}

std::vector<Motif> read_motifs(const std::string& path) {
  std::vector<Motif> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + ": not JSON lines");
    out.push_back(Motif::from_json(j.contains("motif") ? j.at("motif") : j));
  }
  return out;
}

/// Curve over slopes sorted ascending; x must be strictly increasing.
Curve slope_curve(const std::string& series, const std::vector<Motif>& motifs, const std::vector<double>& ys) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < motifs.size(); ++i) pts.push_back({motifs[i].slope_value(), ys[i]});
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.first == b.first; }), pts.end());
  Curve c{series, {}, {}};
  for (auto [x, y] : pts) {
    c.x.push_back(x);
    c.y.push_back(y);
  }
  return c;
}

bool all_slopes(const std::vector<Motif>& ms) {
  return std::all_of(ms.begin(), ms.end(), [](const Motif& m) { return m.is_slope(); });
}

void finish(const RunArtifact& a, const fs::path& dir) {
  a.save(dir);
  std::cerr << "wrote " << dir.string() << "\n";
}

// ---------------------------------------------------------------------------

int cmd_ground_truth(const Globals& g, const std::string& space, const std::vector<double>& slopes,
                     std::size_t random, const std::string& motifs_file, const std::string& grid) {
  const auto cfg = resolved(g);
  std::vector<Motif> motifs;
  if (!motifs_file.empty()) {
    motifs = read_motifs(motifs_file);
  } else if (!slopes.empty()) {
    motifs = slope_motifs(slopes);
  } else if (parse_space(space) == MotifSpace::cell) {
    std::mt19937_64 rng(derive_seed(g.seed, 11));
    for (std::size_t i = 0; i < (random ? random : 8); ++i) motifs.push_back(Motif::cell(CellEncoding::random(rng)));
  } else if (grid == "curve") {
    motifs = slope_motifs(slope_grid(cfg));
  } else if (grid == "interval") {
    motifs = slope_motifs(interval_slopes(cfg));
  } else if (grid == "inference") {
    motifs = slope_motifs(inference_grid(cfg));
  } else {
    throw ConfigError("unknown grid '" + grid + "' (curve, interval, inference)");
  }
  if (g.dry_run) {
    std::cout << cfg.dump(2) << "\n";
    for (const auto& m : motifs) std::cout << m.to_json().dump() << "\n";
    return 0;
  }
  GroundTruthService gt(cfg, g.seed, g.cache, &std::cerr);
  auto a = artifact(cfg, g, "ground-truth");
  a.records = evaluate_all(motifs, gt.evaluator(), g.jobs);
  std::cerr << gt.computed() << " evaluated, " << gt.cache_hits() << " from cache\n";
  if (all_slopes(motifs)) {
    std::vector<double> acc;
    for (const auto& r : a.records) acc.push_back(r.metric);
    a.curves["ground_truth"] = {slope_curve("ground truth", motifs, acc)};
  }
  finish(a, out_dir(g, "ground-truth"));
  return 0;
}

int cmd_petri_train(const Globals& g, const std::string& ledger, bool random_data) {
  const auto cfg = resolved(g);
  const auto records = ledger.empty() ? std::vector<GroundTruthRecord>{} : read_ledger(ledger);
  if (records.empty()) throw ConfigError("petri train needs --ledger");
  std::vector<Motif> motifs;
  std::vector<double> losses;
  for (const auto& r : records) {
    motifs.push_back(r.motif);
    losses.push_back(r.loss());
  }
  require_homogeneous(motifs);
  const bool slope = motifs.front().is_slope();
  auto h = slope ? slope_petri_hyper(cfg) : cell_petri_hyper(cfg);
  const auto bp = slope ? slope_petri_blueprint(cfg) : cell_petri_blueprint(cfg);
  if (random_data) h.outer_steps = 0;
  if (g.dry_run) {
    std::cout << cfg.dump(2) << "\n" << h.to_json().dump(2) << "\n";
    return 0;
  }
  const auto model = train(motifs, losses, h, bp, g.seed, [](std::size_t step, double loss) {
    std::cerr << "  outer step " << step << " loss " << format_double(loss) << "\n";
  });
  auto a = artifact(cfg, g, random_data ? "petri train --ablation-random-data" : "petri train");
  a.records = records;
  a.petri_model = model.to_json();
  if (!model.outer_loss_history.empty()) {
    Curve c{"outer loss", {}, model.outer_loss_history};
    for (std::size_t i = 0; i < c.y.size(); ++i) c.x.push_back(double(i + 1));
    a.curves["outer_loss"] = {c};
  }
  finish(a, out_dir(g, "petri-train"));
  return 0;
}

int cmd_petri_infer(const Globals& g, const std::string& model_file, const std::vector<double>& slopes,
                    const std::string& motifs_file) {
  const auto cfg = resolved(g);
  if (model_file.empty()) throw ConfigError("petri infer needs --model");
  std::vector<Motif> motifs = !motifs_file.empty() ? read_motifs(motifs_file)
                              : !slopes.empty()    ? slope_motifs(slopes)
                                                   : slope_motifs(inference_grid(cfg));
  if (g.dry_run) {
    std::cout << cfg.dump(2) << "\n";
    return 0;
  }
  const auto model = PetriModel::from_json(nlohmann::json::parse(read_file(model_file)));
  const auto raw = infer_raw(model, motifs);
  const auto z = infer(model, motifs);
  auto a = artifact(cfg, g, "petri infer");
  std::string preds;
  for (std::size_t i = 0; i < motifs.size(); ++i)
    preds += nlohmann::json{{"motif", motifs[i].to_json()}, {"inner_loss", raw[i]}, {"predicted", z[i]}}.dump() + "\n";
  if (all_slopes(motifs)) {
    std::vector<double> neg;
    for (double v : z) neg.push_back(-v);
    a.curves["petri_prediction"] = {slope_curve("petri prediction", motifs, neg)};
  }
  const auto dir = out_dir(g, "petri-infer");
  finish(a, dir);
  write_file(dir / "predictions.jsonl", preds);
  return 0;
}

int cmd_baseline(const Globals& g, const std::string& ledger, const std::vector<double>& slopes) {
  const auto cfg = resolved(g);
  if (ledger.empty()) throw ConfigError("baseline needs --ledger");
  const auto bh = baseline_hyper(cfg);
  if (g.dry_run) {
    std::cout << cfg.dump(2) << "\n";
    return 0;
  }
  const auto records = read_ledger(ledger);
  std::vector<double> xs, losses;
  for (const auto& r : records) {
    if (!r.motif.is_slope()) throw MixedVariants("the baseline only models sigmoid slopes");
    xs.push_back(r.motif.slope_value());
    losses.push_back(r.loss());
  }
  const auto m = baseline_train(xs, normalize(losses), bh, g.seed);
  const auto grid = slopes.empty() ? inference_grid(cfg) : slopes;
  auto pred = baseline_predict(m, grid);
  for (auto& p : pred) p = -p;
  auto a = artifact(cfg, g, "baseline");
  a.records = records;
  a.curves["baseline_prediction"] = {slope_curve("baseline prediction", slope_motifs(grid), pred)};
  const auto dir = out_dir(g, "baseline");
  finish(a, dir);
  write_file(dir / "baseline_model.json", m.to_json().dump() + "\n");
  return 0;
}

int cmd_search(const Globals& g, const std::string& arm) {
  const auto cfg = resolved(g);
  const auto sc = search_config(cfg);
  std::vector<SearchArm> arms;
  if (arm == "all") arms = {SearchArm::petri_ga, SearchArm::random_select, SearchArm::ga_only};
  else if (arm == "paired") arms = {SearchArm::petri_ga, SearchArm::random_select};
  else arms = {parse_arm(arm)};
  if (g.dry_run) {
    std::cout << cfg.dump(2) << "\n";
    return 0;
  }
  GroundTruthService gt(cfg, cfg.at("experiment").at("ground_truth_seed").get<std::uint64_t>(), g.cache,
                        &std::cerr);
  const auto out = paired_search(sc, arms, gt, g.seed, g.jobs, [](SearchArm a, const NasState& s) {
    std::cerr << to_string(a) << ": iteration " << s.iteration << ", " << s.budget_used << " evaluations, best "
              << format_double(s.best().loss()) << "\n";
  });
  auto a = artifact(cfg, g, "search " + arm);
  const auto dir = out_dir(g, "search");
  nlohmann::json report = nlohmann::json::object();
  for (const auto& [which, r] : out.results) {
    a.records.insert(a.records.end(), r.state.evaluated.begin(), r.state.evaluated.end());
    a.curves["search"].push_back(search_curve(r));
    report[to_string(which)] = {{"best_loss", r.best().loss()},
                                {"best_motif", r.best().motif.to_json()},
                                {"evaluations", r.state.budget_used}};
  }
  finish(a, dir);
  for (const auto& [which, r] : out.results) {
    write_file(dir / (std::string("trajectory_") + to_string(which) + ".jsonl"), r.trajectory_jsonl());
    write_file(dir / (std::string("summary_") + to_string(which) + ".csv"), r.summary_csv());
  }
  write_file(dir / "report.json", report.dump(2) + "\n");
  for (const auto& [which, r] : out.results)
    std::cout << to_string(which) << " best_loss=" << format_double(r.best().loss())
              << " evaluations=" << r.state.budget_used << "\n";
  return 0;
}

int cmd_slope_study(const Globals& g) {
  const auto cfg = resolved(g);
  const auto grid = slope_grid(cfg);
  const auto interval = interval_slopes(cfg);
  if (g.dry_run) {
    std::cout << cfg.dump(2) << "\n";
    return 0;
  }
  GroundTruthService gt(cfg, cfg.at("experiment").at("ground_truth_seed").get<std::uint64_t>(), g.cache,
                        &std::cerr);
  const auto curve = measure_curve(grid, gt, g.jobs);
  const auto inner = measure_curve(interval, gt, g.jobs);
  const auto o = slope_study(cfg, curve, inner, g.seed);
  auto a = artifact(cfg, g, "slope-study");
  const auto grid_m = slope_motifs(grid), interval_m = slope_motifs(interval);
  for (const auto& r : evaluate_all(grid_m, gt.evaluator())) a.records.push_back(r);
  for (const auto& r : evaluate_all(interval_m, gt.evaluator())) a.records.push_back(r);
  a.petri_model = o.model.to_json();
  a.curves["slope_curves"] = slope_study_curves(curve, o);
  a.curves["ablation"] = {Curve{"random synthetic data", grid, o.ablation_prediction}};
  const nlohmann::json report = {{"ground_truth_peak", curve.slopes[curve.peak()]},
                                 {"interior_peak", curve.interior_peak()},
                                 {"spearman", o.rho},
                                 {"spearman_validation", o.rho_valid},
                                 {"spearman_ablation", o.rho_ablation},
                                 {"best_predicted_slope", o.best_slope},
                                 {"baseline_spearman_left_of_peak", o.baseline_rho_left},
                                 {"train_slopes", o.train_slopes},
                                 {"validation_slopes", o.valid_slopes}};
  const auto dir = out_dir(g, "slope-study");
  finish(a, dir);
  write_file(dir / "report.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Petri-dish surrogate for neural architecture search"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--profile", g.profile, "table2, table4 or desk-scale (default: desk-scale)");
  app.add_option("--config", g.config_file, "JSON config layered over the profile");
  app.add_option("--set", g.overrides, "dotted key=value override, repeatable")->take_all();
  app.add_option("--seed", g.seed, "seed for every random choice");
  app.add_option("--out", g.out, "run directory (default runs/<command>-seed<seed>)");
  app.add_option("--cache", g.cache, "ground-truth cache file (JSON lines)");
  app.add_option("--jobs", g.jobs, "parallel ground-truth evaluations")->check(CLI::PositiveNumber);
  app.add_flag("--dry-run", g.dry_run, "print the resolved config and exit");

  std::string space = "slope", motifs_file, grid = "curve", ledger, model, arm = "paired";
  std::vector<double> slopes;
  std::size_t random = 0;
  bool random_data = false;
  int code = 0;

  auto* gt = app.add_subcommand("ground-truth", "evaluate motifs on the real task");
  gt->add_option("--space", space, "slope or cell")->check(CLI::IsMember({"slope", "cell"}));
  gt->add_option("--slopes", slopes, "comma-separated slopes")->delimiter(',');
  gt->add_option("--grid", grid, "slope set when --slopes is absent: curve, interval or inference");
  gt->add_option("--random", random, "number of random cells (cell space)");
  gt->add_option("--motifs", motifs_file, "JSON-lines motifs");
  gt->callback([&] { code = cmd_ground_truth(g, space, slopes, random, motifs_file, grid); });

  auto* petri = app.add_subcommand("petri", "train or query a Petri dish");
  petri->require_subcommand(1);
  auto* ptrain = petri->add_subcommand("train", "fit synthetic data to a ground-truth ledger");
  ptrain->add_option("--ledger", ledger, "ground-truth ledger (JSON lines)")->required();
  ptrain->add_flag("--ablation-random-data", random_data, "skip the outer loop");
  ptrain->callback([&] { code = cmd_petri_train(g, ledger, random_data); });
  auto* pinfer = petri->add_subcommand("infer", "predict motif performance");
  pinfer->add_option("--model", model, "petri_model.json")->required();
  pinfer->add_option("--slopes", slopes, "comma-separated slopes")->delimiter(',');
  pinfer->add_option("--motifs", motifs_file, "JSON-lines motifs");
  pinfer->callback([&] { code = cmd_petri_infer(g, model, slopes, motifs_file); });

  auto* base = app.add_subcommand("baseline", "slope-to-performance regression surrogate");
  base->add_option("--ledger", ledger, "ground-truth ledger")->required();
  base->add_option("--slopes", slopes, "prediction grid")->delimiter(',');
  base->callback([&] { code = cmd_baseline(g, ledger, slopes); });

  auto* search = app.add_subcommand("search", "architecture search");
  search->add_option("--arm", arm, "petri-ga, random-select, ga-only, paired or all");
  search->callback([&] { code = cmd_search(g, arm); });

  auto* study = app.add_subcommand("slope-study", "ground-truth curve, dish, baseline and ablation");
  study->callback([&] { code = cmd_slope_study(g); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const NonFiniteGradient& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const DataUnavailable& e) {
    std::cerr << "data unavailable: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return code;
}
