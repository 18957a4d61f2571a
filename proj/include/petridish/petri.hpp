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


// The Synthetic Petri Dish: synthetic inputs are trained so that motif-networks
// trained on them rank like the ground truth.
//
// Inner loop: every motif-network starts from the same theta_init and takes
// `inner_steps` optimizer steps on (x_train, y_train), then is scored on
// (x_valid, y_valid). Outer loop: the z-scored validation losses are regressed
// onto the z-scored ground truth, and the error is differentiated back through
// the whole unrolled inner loop into x_train and x_valid.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "petridish/autodiff.hpp"
#include "petridish/error.hpp"
#include "petridish/motif.hpp"
#include "petridish/nn.hpp"
#include "petridish/random.hpp"
#include "petridish/serialize.hpp"
#include "petridish/stats.hpp"

namespace petridish {

struct PetriHyper {
  std::size_t inner_steps = 250;
  double inner_lr = 0.01;
  OptimizerKind inner_optimizer = OptimizerKind::adam;
  double inner_l2 = 1e-5;
  std::size_t outer_steps = 60;
  double outer_lr = 0.05;
  double outer_lr_decay = 0.4;
  double outer_l2 = 1e-5;
  /// Motifs per outer step; larger training sets are subsampled.
  std::size_t motif_batch = 40;
  /// Synthetic samples (rows) in each of the train and valid sets.
  std::size_t samples = 10;
  /// Sequence length for cell motifs; ignored for mlp motifs.
  std::size_t time_steps = 10;
  /// Outer steps between learning-rate decays; 0 means outer_steps / 3.
  std::size_t decay_every = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("petri hyperparameter: " + m); };
    if (!(inner_lr > 0.0)) fail("inner_lr must be positive");
    if (!(inner_l2 >= 0.0)) fail("inner_l2 must be nonnegative");
    if (!(outer_lr >= 0.0)) fail("outer_lr must be nonnegative");
    if (!(outer_lr_decay > 0.0 && outer_lr_decay <= 1.0)) fail("outer_lr_decay must lie in (0, 1]");
    if (!(outer_l2 >= 0.0)) fail("outer_l2 must be nonnegative");
    if (motif_batch < 2) fail("motif_batch must be at least 2");
    if (samples == 0) fail("samples must be positive");
    if (time_steps == 0) fail("time_steps must be positive");
  }

  std::size_t decay_interval() const {
    return decay_every ? decay_every : std::max<std::size_t>(1, outer_steps / 3);
  }

  OptimizerConfig inner_optimizer_config() const {
    OptimizerConfig c;
    c.kind = inner_optimizer;
    c.learning_rate = inner_lr;
    c.l2_penalty = inner_l2;
    return c;
  }

  nlohmann::json to_json() const {
    return {{"inner_steps", inner_steps},   {"inner_lr", inner_lr},
            {"inner_optimizer", to_string(inner_optimizer)},
            {"inner_l2", inner_l2},         {"outer_steps", outer_steps},
            {"outer_lr", outer_lr},         {"outer_lr_decay", outer_lr_decay},
            {"outer_l2", outer_l2},         {"motif_batch", motif_batch},
            {"samples", samples},           {"time_steps", time_steps},
            {"decay_every", decay_every}};
  }
  static PetriHyper from_json(const nlohmann::json& j) {
    PetriHyper h;
    h.inner_steps = j.at("inner_steps").get<std::size_t>();
    h.inner_lr = j.at("inner_lr").get<double>();
    h.inner_optimizer = parse_optimizer(j.at("inner_optimizer").get<std::string>());
    h.inner_l2 = j.at("inner_l2").get<double>();
    h.outer_steps = j.at("outer_steps").get<std::size_t>();
    h.outer_lr = j.at("outer_lr").get<double>();
    h.outer_lr_decay = j.at("outer_lr_decay").get<double>();
    h.outer_l2 = j.at("outer_l2").get<double>();
    h.motif_batch = j.at("motif_batch").get<std::size_t>();
    h.samples = j.at("samples").get<std::size_t>();
    h.time_steps = j.at("time_steps").get<std::size_t>();
    h.decay_every = j.at("decay_every").get<std::size_t>();
    h.validate();
    return h;
  }

  friend bool operator==(const PetriHyper&, const PetriHyper&) = default;
};

/// Learned inputs with labels that never change after initialization.
struct SyntheticDataset {
  Array x_train, y_train, x_valid, y_valid;

  friend bool operator==(const SyntheticDataset&, const SyntheticDataset&) = default;
};

/// Inputs ~ N(0, 1), labels ~ U(0, 1); the validation set starts as a copy
/// of the training set.
inline SyntheticDataset init_synthetic(const NetworkBlueprint& bp, const PetriHyper& h,
                                       std::uint64_t seed) {
  Shape xs, ys;
  if (bp.kind == NetworkKind::mlp) {
    xs = {h.samples, bp.input_size()};
    ys = {h.samples, bp.output_size()};
  } else {
    xs = {h.samples, h.time_steps, bp.input_size()};
    ys = {h.samples, h.time_steps, bp.output_size()};
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Array x(xs), y(ys);
  for (auto& v : x.data) v = normal(rng);
  for (auto& v : y.data) v = uniform(rng);
  return {x, y, x, y};
}

/// Per-block validation losses after the inner loop, recorded in `x_train`'s
/// graph so that they can be differentiated with respect to the inputs.
inline std::vector<Tensor> inner_loop_graph(const MotifNetwork& net, const Tensor& x_train,
                                            const Tensor& x_valid, const SyntheticDataset& data,
                                            const PetriHyper& h) {
  Graph& g = x_train.graph();
  const Array y_train = arrange_targets(net.blueprint, data.y_train);
  const Array y_valid = arrange_targets(net.blueprint, data.y_valid);
  auto leaves = param_leaves(g, net.params, true);
  std::vector<Tensor> theta(leaves.begin(), leaves.end());
  GraphOptimizerState opt(h.inner_optimizer_config());
  for (std::size_t step = 0; step < h.inner_steps; ++step) {
    Tensor loss = sum(bce_with_logits_per_block(network_logits(net, theta, x_train), y_train));
    if (auto pen = l2_penalty(theta, h.inner_l2)) loss = add(loss, *pen);
    auto grads = backward(loss, theta, true);
    theta = optimizer_step(theta, grads, opt);
  }
  return split_blocks(bce_with_logits_per_block(network_logits(net, theta, x_valid), y_valid));
}

/// Same numbers as inner_loop_graph without keeping the trajectory.
inline std::vector<double> inner_loop_plain(const MotifNetwork& net, const SyntheticDataset& data,
                                            const PetriHyper& h) {
  const Array y_train = arrange_targets(net.blueprint, data.y_train);
  const Array y_valid = arrange_targets(net.blueprint, data.y_valid);
  ParamSet theta = net.params;
  OptimizerState opt(h.inner_optimizer_config());
  for (std::size_t step = 0; step < h.inner_steps; ++step)
    train_step(theta, opt, [&](Graph& g, std::span<const Tensor> p) {
      return sum(bce_with_logits_per_block(network_logits(net, p, g.constant(data.x_train)), y_train));
    });
  Graph g;
  auto p = param_leaves(g, theta, false);
  return bce_with_logits_per_block(network_logits(net, p, g.constant(data.x_valid)), y_valid)
      .value()
      .data;
}

/// Inner validation loss of each network. The networks are trained together
/// as one super-network; `differentiable` selects the recorded path.
inline std::vector<double> inner_loop(std::span<const MotifNetwork> nets,
                                      const SyntheticDataset& data, const PetriHyper& h,
                                      bool differentiable) {
  const MotifNetwork super = build_super_network(nets);
  if (!differentiable) return inner_loop_plain(super, data, h);
  Graph g;
  auto xt = g.variable(data.x_train);
  auto xv = g.variable(data.x_valid);
  std::vector<double> out;
  for (const auto& t : inner_loop_graph(super, xt, xv, data, h)) out.push_back(t.item());
  return out;
}

/// Mean squared error between z-scored inner losses and z-scored ground
/// truth. The ground truth is a constant.
inline Tensor outer_loss(std::span<const Tensor> inner_valid, std::span<const double> ground_truth) {
  if (inner_valid.size() != ground_truth.size())
    throw ShapeError("outer_loss: " + std::to_string(inner_valid.size()) + " losses vs " +
                     std::to_string(ground_truth.size()) + " ground-truth values");
  const auto target = normalize_snapped(ground_truth);
  std::vector<Tensor> parts;
  for (const auto& t : inner_valid) parts.push_back(reshape(t, {1}));
  Graph& g = parts.front().graph();
  Tensor v = concat(parts, 0);
  Tensor d = sub(v, mean(v));
  Tensor var = mean(square(d));
  if (!(var.item() > 0.0))
    throw DegenerateVariance("inner validation losses are all equal; the dish cannot rank them");
  Tensor z = div(d, sqrt(var));
  return mean(square(sub(z, g.constant(Array({target.size()}, target)))));
}

/// Plain-number form of outer_loss.
inline double outer_loss_value(std::span<const double> inner_valid,
                               std::span<const double> ground_truth) {
  Graph g;
  std::vector<Tensor> parts;
  for (double v : inner_valid) parts.push_back(g.constant(Array::scalar(v)));
  return outer_loss(parts, ground_truth).item();
}

struct PetriModel {
  SyntheticDataset synthetic;
  std::uint64_t theta_init_seed = 0;
  NetworkBlueprint blueprint;
  PetriHyper hyper;
  std::vector<double> outer_loss_history;
  /// Adam state over (x_train, x_valid).
  OptimizerState outer_optimizer;
  /// Seed of the motif-batch sampler.
  std::uint64_t batch_seed = 0;

  nlohmann::json to_json() const {
    return {{"format", "petridish-model/1"},
            {"blueprint", blueprint.to_json()},
            {"hyper", hyper.to_json()},
            {"theta_init_seed", theta_init_seed},
            {"batch_seed", batch_seed},
            {"synthetic",
             {{"x_train", array_to_json(synthetic.x_train)},
              {"y_train", array_to_json(synthetic.y_train)},
              {"x_valid", array_to_json(synthetic.x_valid)},
              {"y_valid", array_to_json(synthetic.y_valid)}}},
            {"outer_loss_history", outer_loss_history},
            {"outer_optimizer", optimizer_to_json(outer_optimizer)}};
  }

  static PetriModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "petridish-model/1") throw Error("not a petridish model document");
    PetriModel m;
    m.blueprint = NetworkBlueprint::from_json(j.at("blueprint"));
    m.hyper = PetriHyper::from_json(j.at("hyper"));
    m.theta_init_seed = j.at("theta_init_seed").get<std::uint64_t>();
    m.batch_seed = j.at("batch_seed").get<std::uint64_t>();
    const auto& s = j.at("synthetic");
    m.synthetic = {array_from_json(s.at("x_train")), array_from_json(s.at("y_train")),
                   array_from_json(s.at("x_valid")), array_from_json(s.at("y_valid"))};
    m.outer_loss_history = j.at("outer_loss_history").get<std::vector<double>>();
    m.outer_optimizer = optimizer_from_json(j.at("outer_optimizer"));
    return m;
  }

  friend bool operator==(const PetriModel&, const PetriModel&) = default;
};

/// A fresh, untrained dish. Training it for zero outer steps is the
/// random-synthetic-data ablation.
inline PetriModel init_model(const NetworkBlueprint& bp, const PetriHyper& h, std::uint64_t seed) {
  bp.validate();
  h.validate();
  PetriModel m;
  m.blueprint = bp;
  m.hyper = h;
  m.theta_init_seed = derive_seed(seed, 1);
  m.synthetic = init_synthetic(bp, h, derive_seed(seed, 2));
  m.batch_seed = derive_seed(seed, 3);
  OptimizerConfig oc;
  oc.kind = OptimizerKind::adam;
  oc.learning_rate = h.outer_lr;
  oc.l2_penalty = h.outer_l2;
  m.outer_optimizer = OptimizerState(oc);
  return m;
}

/// Gradients of the outer objective (outer loss plus the L2 penalty on the
/// synthetic inputs) with respect to x_train and x_valid.
struct Hypergradient {
  double loss = 0.0;
  Array d_x_train, d_x_valid;
};

inline Hypergradient hypergradient(const PetriModel& model, std::span<const Motif> motifs,
                                   std::span<const double> ground_truth) {
  if (motifs.size() != ground_truth.size())
    throw ShapeError("hypergradient: motif and ground-truth counts differ");
  if (motifs.size() < 2) throw DegenerateVariance("the dish needs at least two motifs");
  const auto nets = instantiate(motifs, model.blueprint, model.theta_init_seed);
  const MotifNetwork super = build_super_network(nets);
  Graph g;
  auto xt = g.variable(model.synthetic.x_train);
  auto xv = g.variable(model.synthetic.x_valid);
  auto inner = inner_loop_graph(super, xt, xv, model.synthetic, model.hyper);
  Tensor loss = outer_loss(inner, ground_truth);
  Tensor total = loss;
  const Tensor xs[] = {xt, xv};
  if (auto pen = l2_penalty(xs, model.hyper.outer_l2)) total = add(total, *pen);
  auto grads = backward(total, xs, false);
  Hypergradient out{loss.item(), grads[0].value(), grads[1].value()};
  auto finite = [](const Array& a) {
    return std::all_of(a.data.begin(), a.data.end(), [](double v) { return std::isfinite(v); });
  };
  if (!std::isfinite(out.loss) || !finite(out.d_x_train) || !finite(out.d_x_valid))
    throw NonFiniteGradient("hypergradient is not finite (outer loss " + std::to_string(out.loss) +
                            "); lower the outer learning rate or inner steps");
  return out;
}

/// One outer update of the synthetic inputs. Motif-networks are rebuilt from
/// theta_init every time. Returns the outer loss before the update.
inline double outer_step(PetriModel& model, std::span<const Motif> motifs,
                         std::span<const double> ground_truth) {
  const Hypergradient hg = hypergradient(model, motifs, ground_truth);
  const auto& h = model.hyper;
  const double decays = double(model.outer_optimizer.step / h.decay_interval());
  model.outer_optimizer.config.learning_rate = h.outer_lr * std::pow(h.outer_lr_decay, decays);
  std::vector<Array> xs = {model.synthetic.x_train, model.synthetic.x_valid};
  optimizer_step(xs, {hg.d_x_train, hg.d_x_valid}, model.outer_optimizer);
  model.synthetic.x_train = std::move(xs[0]);
  model.synthetic.x_valid = std::move(xs[1]);
  model.outer_loss_history.push_back(hg.loss);
  return hg.loss;
}

using OuterProgress = std::function<void(std::size_t step, double loss)>;

/// Trains a dish on (motifs, ground-truth losses). Lower loss is better.
inline PetriModel train(std::span<const Motif> motifs, std::span<const double> ground_truth,
                        const PetriHyper& hyper, const NetworkBlueprint& bp, std::uint64_t seed,
                        const OuterProgress& progress = {}) {
  if (motifs.size() != ground_truth.size())
    throw ShapeError("train: motif and ground-truth counts differ");
  if (motifs.size() < 2) throw DegenerateVariance("the dish needs at least two motifs");
  check_motif_slot(bp, motifs);
  PetriModel model = init_model(bp, hyper, seed);
  std::mt19937_64 rng(model.batch_seed);
  for (std::size_t step = 0; step < hyper.outer_steps; ++step) {
    double loss;
    if (motifs.size() > hyper.motif_batch) {
      auto idx = sample_without_replacement(motifs.size(), hyper.motif_batch, rng);
      std::sort(idx.begin(), idx.end());
      std::vector<Motif> ms;
      std::vector<double> gt;
      for (auto i : idx) {
        ms.push_back(motifs[i]);
        gt.push_back(ground_truth[i]);
      }
      loss = outer_step(model, ms, gt);
    } else {
      loss = outer_step(model, motifs, ground_truth);
    }
    if (progress) progress(step, loss);
  }
  return model;
}

/// Inner validation losses of `motifs` on the model's synthetic data. Motifs
/// are processed in super-network chunks of motif_batch.
inline std::vector<double> infer_raw(const PetriModel& model, std::span<const Motif> motifs) {
  check_motif_slot(model.blueprint, motifs);
  std::vector<double> out;
  const std::size_t chunk = model.hyper.motif_batch;
  for (std::size_t lo = 0; lo < motifs.size(); lo += chunk) {
    const auto part = motifs.subspan(lo, std::min(chunk, motifs.size() - lo));
    const auto nets = instantiate(part, model.blueprint, model.theta_init_seed);
    const auto losses = inner_loop_plain(build_super_network(nets), model.synthetic, model.hyper);
    out.insert(out.end(), losses.begin(), losses.end());
  }
  return out;
}

/// Predicted performance as z-scored inner losses; lower is better. A query
/// whose losses are all equal carries no ranking and yields zeros.
inline std::vector<double> infer(const PetriModel& model, std::span<const Motif> motifs) {
  const auto raw = infer_raw(model, motifs);
  try {
    return normalize(raw);
  } catch (const DegenerateVariance&) {
    return std::vector<double>(raw.size(), 0.0);
  }
}

/// Picks the grid point whose dish, trained on a random half of the data,
/// has the lowest outer loss on the other half.
inline PetriHyper select_hypers(std::span<const Motif> motifs, std::span<const double> ground_truth,
                                std::span<const PetriHyper> grid, const NetworkBlueprint& bp,
                                std::uint64_t seed, std::vector<double>* scores = nullptr) {
  if (grid.empty()) throw ConfigError("hyperparameter grid is empty");
  if (motifs.size() != ground_truth.size())
    throw ShapeError("select_hypers: motif and ground-truth counts differ");
  if (grid.size() == 1) return grid.front();
  if (motifs.size() < 4 || motifs.size() % 2)
    throw Error("select_hypers needs an even number (>= 4) of motifs");
  std::mt19937_64 rng(derive_seed(seed, 4));
  const auto order = sample_without_replacement(motifs.size(), motifs.size(), rng);
  const std::size_t half = motifs.size() / 2;
  std::vector<Motif> tm, vm;
  std::vector<double> tg, vg;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < half ? tm : vm).push_back(motifs[order[i]]);
    (i < half ? tg : vg).push_back(ground_truth[order[i]]);
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double score;
    try {
      const auto model = train(tm, tg, grid[i], bp, seed);
      score = outer_loss_value(infer_raw(model, vm), vg);
    } catch (const NonFiniteGradient&) {
      score = std::numeric_limits<double>::infinity();
    }
    if (scores) scores->push_back(score);
    if (score < best) {
      best = score;
      best_i = i;
    }
  }
  return grid[best_i];
}

}  // namespace petridish
