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


// The control predictor: a 1 -> 10 -> 1 sigmoid MLP regressing normalized
// ground-truth performance directly on the slope value.

#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "petridish/autodiff.hpp"
#include "petridish/error.hpp"
#include "petridish/nn.hpp"
#include "petridish/random.hpp"
#include "petridish/serialize.hpp"

namespace petridish {

struct BaselineHyper {
  std::size_t hidden = 10;
  double lr = 0.01;
  double lr_decay = 0.97;
  std::size_t decay_steps = 100;
  double l2 = 1e-4;
  std::size_t steps = 150;
  std::size_t batch = 15;
  double init_scale = 1.0;

  void validate() const {
    if (hidden == 0 || steps == 0 || batch == 0 || decay_steps == 0)
      throw ConfigError("baseline: counts must be positive");
    if (!(lr > 0.0) || !(lr_decay > 0.0 && lr_decay <= 1.0) || !(l2 >= 0.0) || !(init_scale > 0.0))
      throw ConfigError("baseline: lr > 0, lr_decay in (0, 1], l2 >= 0, init_scale > 0");
  }

  nlohmann::json to_json() const {
    return {{"hidden", hidden}, {"lr", lr},       {"lr_decay", lr_decay}, {"decay_steps", decay_steps},
            {"l2", l2},         {"steps", steps}, {"batch", batch},       {"init_scale", init_scale}};
  }

  friend bool operator==(const BaselineHyper&, const BaselineHyper&) = default;
};

struct BaselineModel {
  NetworkBlueprint blueprint;
  ParamSet params;
  BaselineHyper hyper;
  std::vector<double> loss_history;

  nlohmann::json to_json() const {
    nlohmann::json p = nlohmann::json::object();
    for (std::size_t i = 0; i < params.names.size(); ++i) p[params.names[i]] = array_to_json(params.tensors[i]);
    return {{"blueprint", blueprint.to_json()}, {"hyper", hyper.to_json()}, {"params", p},
            {"loss_history", loss_history}};
  }
};

namespace detail {
inline Tensor baseline_forward(const BaselineModel& m, std::span<const Tensor> p, const Tensor& x) {
  return mlp_forward(m.blueprint, p, x, {{Activation::sigmoid, 1.0}}).logits;
}
}  // namespace detail

/// Fits (x, target) pairs by mean squared error with Adam and step decay.
inline BaselineModel baseline_train(std::span<const double> xs, std::span<const double> targets,
                                    const BaselineHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  if (xs.size() != targets.size()) throw ShapeError("baseline: inputs and targets differ in length");
  if (xs.size() < 2) throw Error("baseline needs at least two points");
  BaselineModel m;
  m.hyper = hyper;
  m.blueprint = NetworkBlueprint::mlp({1, hyper.hidden, 1}, hyper.init_scale);
  m.params = init_params(m.blueprint, derive_seed(seed, 0));
  OptimizerConfig oc;
  oc.kind = OptimizerKind::adam;
  oc.l2_penalty = hyper.l2;
  OptimizerState opt(oc);
  std::mt19937_64 rng(derive_seed(seed, 1));
  const std::size_t n = xs.size(), b = std::min(hyper.batch, n);
  for (std::size_t step = 0; step < hyper.steps; ++step) {
    opt.config.learning_rate = hyper.lr * std::pow(hyper.lr_decay, double(step / hyper.decay_steps));
    std::vector<std::size_t> rows;
    if (b == n) {
      for (std::size_t i = 0; i < n; ++i) rows.push_back(i);
    } else {
      rows = sample_without_replacement(n, b, rng);
    }
    Array x({rows.size(), 1}), t({1, rows.size(), 1});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.data[i] = xs[rows[i]];
      t.data[i] = targets[rows[i]];
    }
    m.loss_history.push_back(train_step(m.params, opt, [&](Graph& g, std::span<const Tensor> p) {
      return mean(square(sub(detail::baseline_forward(m, p, g.constant(x)), g.constant(t))));
    }));
  }
  return m;
}

inline double baseline_predict(const BaselineModel& m, double x) {
  Graph g;
  auto p = param_leaves(g, m.params, false);
  return detail::baseline_forward(m, p, g.constant(Array({1, 1}, {x}))).item();
}

inline std::vector<double> baseline_predict(const BaselineModel& m, std::span<const double> xs) {
  std::vector<double> out;
  for (double x : xs) out.push_back(baseline_predict(m, x));
  return out;
}

}  // namespace petridish
