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


// Experiment configuration: named profiles holding every table default, a
// JSON file layered on top, then dotted key=value overrides. Unknown keys and
// type changes are rejected.

#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "petridish/baseline.hpp"
#include "petridish/error.hpp"
#include "petridish/ground_truth.hpp"
#include "petridish/nn.hpp"
#include "petridish/petri.hpp"
#include "petridish/search.hpp"

namespace petridish {

inline const std::vector<std::string>& profile_names() {
  static const std::vector<std::string> names = {"table2", "table4", "desk-scale"};
  return names;
}

namespace detail {

inline nlohmann::json petri_json(const PetriHyper& h) { return h.to_json(); }

inline nlohmann::json base_profile() {
  EvalConfig mnist;  // full-scale ground truth
  mnist.task = TaskKind::mnist_slope;
  mnist.epochs = 50;
  mnist.batch_size = 50;
  mnist.lr = 0.01;
  mnist.l2 = 1e-5;
  mnist.width = 100;
  mnist.init_scale = 1.0;
  mnist.train_subset_size = 50000;
  mnist.valid_subset_size = 10000;
  mnist.repeats = 20;

  EvalConfig lm;
  lm.task = TaskKind::char_lm;
  lm.steps = 300;
  lm.batch_size = 16;
  lm.seq_len = 16;
  lm.lr = 0.01;
  lm.l2 = 0.0;
  lm.width = 64;
  lm.init_scale = 0.125;
  lm.train_subset_size = 1;
  lm.valid_subset_size = 256;
  lm.repeats = 1;

  PetriHyper slope;  // sigmoid-slope dish
  slope.inner_steps = 250;
  slope.inner_lr = 0.01;
  slope.inner_l2 = 1e-5;
  slope.outer_steps = 60;
  slope.outer_lr = 0.05;
  slope.outer_lr_decay = 0.4;
  slope.outer_l2 = 1e-5;
  slope.motif_batch = 40;
  slope.samples = 10;
  slope.time_steps = 1;

  PetriHyper cell;  // recurrent-cell dish
  cell.inner_steps = 50;
  cell.inner_lr = 0.01;
  cell.inner_l2 = 1e-5;
  cell.outer_steps = 200;
  cell.outer_lr = 2.0;
  cell.outer_lr_decay = 0.5;
  cell.outer_l2 = 5e-5;
  cell.motif_batch = 40;
  cell.samples = 20;
  cell.time_steps = 10;

  return {
      {"profile", "table2"},
      {"mnist_dir", ""},
      {"corpus", ""},
      {"ground_truth", mnist.to_json()},
      {"char_lm", lm.to_json()},
      {"petri", petri_json(slope)},
      {"petri_net", {{"input", 10}, {"hidden", 1}, {"output", 10}, {"init_scale", 1.0}}},
      {"cell_petri", petri_json(cell)},
      {"cell_net", {{"input", 10}, {"width", 3}, {"output", 10}, {"init_scale", 1.0}}},
      {"baseline", BaselineHyper{}.to_json()},
      {"search",
       {{"space", "cell"},
        {"warm_start", 40},
        {"m", 100},
        {"k", 20},
        {"iterations", 5},
        {"budget", 0},
        {"parents", 20},
        {"crossover_rate", 0.3},
        {"mutation_rate", 0.05},
        {"slope_sigma", 0.05}}},
      {"experiment",
       {{"slope_min", 0.01},
        {"slope_max", 2.01},
        {"curve_points", 30},
        {"train_lo", 0.37},
        {"train_hi", 1.50},
        {"train_points", 30},
        {"infer_points", 50},
        {"ground_truth_seed", 0}}},
  };
}

inline void merge_checked(nlohmann::json& into, const nlohmann::json& from, const std::string& prefix) {
  if (!from.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = from.begin(); it != from.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!into.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    auto& slot = into[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
      continue;
    }
    const auto& v = it.value();
    const bool ok = (slot.is_number() && v.is_number()) || (slot.is_string() && v.is_string()) ||
                    (slot.is_boolean() && v.is_boolean());
    if (!ok) throw ConfigError("config key '" + key + "' expects a " + slot.type_name() + ", got " + v.type_name());
    if (slot.is_number_unsigned() && !(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)))
      throw ConfigError("config key '" + key + "' expects a nonnegative integer");
    slot = v;
  }
}

}  // namespace detail

/// Default document for a profile.
inline nlohmann::json profile_defaults(const std::string& name) {
  auto j = detail::base_profile();
  j["profile"] = name;
  if (name == "table2" || name == "table4") return j;
  if (name != "desk-scale") throw ConfigError("unknown profile '" + name + "'");
  // Desk scale: reduced MNIST ground truth and a cheaper cell study.
  auto& gt = j["ground_truth"];
  gt["epochs"] = 10;
  gt["train_subset_size"] = 3500;
  gt["valid_subset_size"] = 1500;
  gt["repeats"] = 3;
  auto& lm = j["char_lm"];
  lm["steps"] = 150;
  // Cheaper cell dish. Smaller init and a faster inner loop let 20 inner
  // steps reach the regime where trainability, not initial output scale,
  // orders the cells; a small outer lr limits overfitting the short ledger.
  auto& cp = j["cell_petri"];
  cp["inner_steps"] = 20;
  cp["inner_lr"] = 0.05;
  cp["outer_steps"] = 30;
  cp["outer_lr"] = 0.02;
  cp["samples"] = 10;
  cp["time_steps"] = 5;
  j["cell_net"]["init_scale"] = 0.3;
  auto& s = j["search"];
  s["warm_start"] = 8;
  s["m"] = 30;
  s["k"] = 6;
  s["iterations"] = 3;
  return j;
}

/// Parses "a.b.c=value". The value is read as JSON when possible, otherwise
/// as a bare string.
inline void apply_override(nlohmann::json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = nlohmann::json{{*it, patch}};
  detail::merge_checked(cfg, patch, "");
}

/// Profile defaults, then `file` (may be null), then overrides.
inline nlohmann::json resolve_config(const std::string& profile, const nlohmann::json& file,
                                     const std::vector<std::string>& overrides) {
  std::string name = profile;
  if (name.empty()) name = file.is_object() && file.contains("profile") ? file["profile"].get<std::string>() : "desk-scale";
  auto cfg = profile_defaults(name);
  if (!file.is_null()) {
    auto f = file;
    if (f.contains("profile")) f.erase("profile");
    detail::merge_checked(cfg, f, "");
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  if (cfg["profile"] != name) throw ConfigError("profile cannot be changed by an override; use --profile");
  return cfg;
}

// Typed views. Each validates its section.

inline EvalConfig mnist_eval_config(const nlohmann::json& cfg) {
  auto c = EvalConfig::from_json(cfg.at("ground_truth"));
  if (c.task != TaskKind::mnist_slope) throw ConfigError("ground_truth.task must be mnist-slope");
  return c;
}
inline EvalConfig lm_eval_config(const nlohmann::json& cfg) {
  auto c = EvalConfig::from_json(cfg.at("char_lm"));
  if (c.task != TaskKind::char_lm) throw ConfigError("char_lm.task must be char-lm");
  return c;
}
inline PetriHyper slope_petri_hyper(const nlohmann::json& cfg) { return PetriHyper::from_json(cfg.at("petri")); }
inline PetriHyper cell_petri_hyper(const nlohmann::json& cfg) { return PetriHyper::from_json(cfg.at("cell_petri")); }
inline NetworkBlueprint slope_petri_blueprint(const nlohmann::json& cfg) {
  const auto& n = cfg.at("petri_net");
  return NetworkBlueprint::mlp({n.at("input").get<std::size_t>(), n.at("hidden").get<std::size_t>(),
                                n.at("output").get<std::size_t>()},
                               n.at("init_scale").get<double>());
}
inline NetworkBlueprint cell_petri_blueprint(const nlohmann::json& cfg) {
  const auto& n = cfg.at("cell_net");
  return NetworkBlueprint::cell(n.at("input").get<std::size_t>(), n.at("width").get<std::size_t>(),
                                n.at("output").get<std::size_t>(), n.at("init_scale").get<double>());
}
inline BaselineHyper baseline_hyper(const nlohmann::json& cfg) {
  const auto& b = cfg.at("baseline");
  BaselineHyper h;
  h.hidden = b.at("hidden").get<std::size_t>();
  h.lr = b.at("lr").get<double>();
  h.lr_decay = b.at("lr_decay").get<double>();
  h.decay_steps = b.at("decay_steps").get<std::size_t>();
  h.l2 = b.at("l2").get<double>();
  h.steps = b.at("steps").get<std::size_t>();
  h.batch = b.at("batch").get<std::size_t>();
  h.init_scale = b.at("init_scale").get<double>();
  h.validate();
  return h;
}
inline SearchConfig search_config(const nlohmann::json& cfg) {
  const auto& s = cfg.at("search");
  SearchConfig c;
  c.space = parse_space(s.at("space").get<std::string>());
  c.warm_start = s.at("warm_start").get<std::size_t>();
  c.m = s.at("m").get<std::size_t>();
  c.k = s.at("k").get<std::size_t>();
  c.iterations = s.at("iterations").get<std::size_t>();
  c.budget = s.at("budget").get<std::size_t>();
  c.ga.parents = s.at("parents").get<std::size_t>();
  c.ga.crossover_rate = s.at("crossover_rate").get<double>();
  c.ga.mutation_rate = s.at("mutation_rate").get<double>();
  c.ga.slope_sigma = s.at("slope_sigma").get<double>();
  if (c.space == MotifSpace::cell) {
    c.petri = cell_petri_hyper(cfg);
    c.blueprint = cell_petri_blueprint(cfg);
  } else {
    c.petri = slope_petri_hyper(cfg);
    c.blueprint = slope_petri_blueprint(cfg);
  }
  c.validate();
  return c;
}

}  // namespace petridish
