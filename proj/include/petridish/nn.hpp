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

// Networks, losses and optimizers.
//
// Every network is stored in "block" form: each parameter tensor has shape
// (blocks, rows, cols) and block n belongs to the n-th motif. A single
// network is the one-block case; a super-network stacks several networks and
// evaluates them with batched matmuls, so no value ever crosses a block
// boundary in either direction.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "petridish/autodiff.hpp"
#include "petridish/error.hpp"
#include "petridish/motif.hpp"

namespace petridish {

enum class NetworkKind { mlp, recurrent_cell_lm };

inline const char* to_string(NetworkKind k) {
  return k == NetworkKind::mlp ? "mlp" : "recurrent-cell-lm";
}

struct NetworkBlueprint {
  NetworkKind kind = NetworkKind::mlp;
  /// mlp: input, hidden..., output. recurrent-cell-lm: input, cell width, output.
  std::vector<std::size_t> layer_sizes;
  /// Where the motif goes: "hidden" (mlp activations) or "cell".
  std::string motif_slot = "hidden";
  /// Standard deviation of the normal weight initialization.
  double init_scale = 1.0;

  static NetworkBlueprint mlp(std::vector<std::size_t> sizes, double init_scale = 1.0) {
    NetworkBlueprint b{NetworkKind::mlp, std::move(sizes), "hidden", init_scale};
    b.validate();
    return b;
  }
  static NetworkBlueprint cell(std::size_t input, std::size_t width, std::size_t output,
                               double init_scale = 1.0) {
    NetworkBlueprint b{NetworkKind::recurrent_cell_lm, {input, width, output}, "cell", init_scale};
    b.validate();
    return b;
  }

  void validate() const {
    if (layer_sizes.size() < 2) throw ShapeError("blueprint needs input and output layers");
    if (kind == NetworkKind::recurrent_cell_lm && layer_sizes.size() != 3)
      throw ShapeError("cell blueprint is (input, width, output)");
    for (auto s : layer_sizes)
      if (s == 0) throw ShapeError("blueprint layer of width 0");
    if (!(init_scale >= 0.0)) throw Error("init_scale must be nonnegative");
  }

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)},
            {"layer_sizes", layer_sizes},
            {"motif_slot", motif_slot},
            {"init_scale", init_scale}};
  }
  static NetworkBlueprint from_json(const nlohmann::json& j) {
    NetworkBlueprint b;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "mlp") b.kind = NetworkKind::mlp;
    else if (kind == "recurrent-cell-lm") b.kind = NetworkKind::recurrent_cell_lm;
    else throw Error("unknown network kind '" + kind + "'");
    b.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    b.motif_slot = j.at("motif_slot").get<std::string>();
    b.init_scale = j.at("init_scale").get<double>();
    b.validate();
    return b;
  }

  friend bool operator==(const NetworkBlueprint&, const NetworkBlueprint&) = default;
};

/// Named parameter tensors, each of shape (blocks, rows, cols).
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Array> tensors;
  std::uint64_t init_seed = 0;

  std::size_t blocks() const { return tensors.empty() ? 0 : tensors.front().shape[0]; }
  /// Scalar parameters per block.
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size() / t.shape[0];
    return n;
  }
  const Array& at(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return tensors[i];
    throw Error("no parameter named '" + name + "'");
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

namespace detail {

inline std::vector<std::pair<std::string, Shape>> param_layout(const NetworkBlueprint& bp) {
  std::vector<std::pair<std::string, Shape>> out;
  const auto& s = bp.layer_sizes;
  if (bp.kind == NetworkKind::mlp) {
    for (std::size_t l = 0; l + 1 < s.size(); ++l) {
      out.push_back({"W" + std::to_string(l), {1, s[l], s[l + 1]}});
      out.push_back({"b" + std::to_string(l), {1, 1, s[l + 1]}});
    }
    return out;
  }
  const std::size_t in = s[0], w = s[1], o = s[2];
  out.push_back({"Wx", {1, in, w}});
  out.push_back({"Wh", {1, w, w}});
  for (std::size_t i = 1; i < CellEncoding::kNodes; ++i)
    out.push_back({"W" + std::to_string(i), {1, w, w}});
  out.push_back({"Wo", {1, w, o}});
  out.push_back({"bo", {1, 1, o}});
  return out;
}

}  // namespace detail

/// One block of parameters: weights ~ N(0, init_scale^2), biases zero.
inline ParamSet init_params(const NetworkBlueprint& bp, std::uint64_t seed) {
  bp.validate();
  ParamSet p;
  p.init_seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& [name, shape] : detail::param_layout(bp)) {
    Array a(shape);
    if (name[0] != 'b')
      for (auto& v : a.data) v = normal(rng) * bp.init_scale;
    p.names.push_back(name);
    p.tensors.push_back(std::move(a));
  }
  return p;
}

/// Parameters inside the recurrent cell proper (input, recurrent and node
/// weights), excluding the output projection.
inline std::size_t cell_parameter_count(std::size_t input, std::size_t width) {
  return input * width + width * width + (CellEncoding::kNodes - 1) * width * width;
}

/// Graph leaves for every parameter tensor.
inline std::vector<Tensor> param_leaves(Graph& g, const ParamSet& p, bool requires_grad) {
  std::vector<Tensor> out;
  out.reserve(p.tensors.size());
  for (const auto& t : p.tensors) out.push_back(g.leaf(t, requires_grad));
  return out;
}

namespace detail {

inline Tensor to_blocks(const Tensor& x, std::size_t blocks) {
  // (B, d) -> (blocks, B, d); (blocks, B, d) passes through.
  if (x.shape().size() == 3) {
    if (x.shape()[0] != blocks)
      throw ShapeError("input has " + std::to_string(x.shape()[0]) + " blocks, network has " +
                       std::to_string(blocks));
    return x;
  }
  if (x.shape().size() != 2) throw ShapeError("network input must be (batch, width)");
  Tensor r = reshape(x, {1, x.shape()[0], x.shape()[1]});
  return blocks == 1 ? r : expand(r, 0, blocks);
}

inline Tensor add_bias(const Tensor& z, const Tensor& bias) {
  const std::size_t rows = z.shape()[1];
  return add(z, rows == 1 ? bias : expand(bias, 1, rows));
}

inline std::vector<ActSpec> collapse(std::vector<ActSpec> specs) {
  for (const auto& s : specs)
    if (!(s == specs.front())) return specs;
  specs.resize(1);
  return specs;
}

}  // namespace detail

/// Hidden-layer activation per block for slope motifs.
inline std::vector<ActSpec> slope_specs(std::span<const Motif> motifs) {
  std::vector<ActSpec> specs;
  for (const auto& m : motifs) {
    if (!m.is_slope()) throw MixedVariants("mlp motif slot expects sigmoid-slope motifs");
    specs.push_back({Activation::sigmoid, m.slope_value()});
  }
  return specs;
}

struct MlpTrace {
  std::vector<Tensor> hidden;  ///< post-activation hidden layers
  Tensor logits;               ///< (blocks, batch, output), pre-squashing
};

/// Feed-forward pass. `x` is (batch, input) shared by all blocks, or
/// (blocks, batch, input). Hidden layers use the per-block activations.
inline MlpTrace mlp_forward(const NetworkBlueprint& bp, std::span<const Tensor> params,
                            const Tensor& x, std::vector<ActSpec> hidden_specs) {
  if (bp.kind != NetworkKind::mlp) throw Error("mlp_forward on a non-mlp blueprint");
  const std::size_t layers = bp.layer_sizes.size() - 1;
  if (params.size() != 2 * layers) throw ShapeError("mlp_forward: wrong parameter count");
  if (x.shape().back() != bp.input_size())
    throw ShapeError("mlp_forward: input width " + std::to_string(x.shape().back()) +
                     " != blueprint input " + std::to_string(bp.input_size()));
  const std::size_t blocks = params[0].shape()[0];
  hidden_specs = detail::collapse(std::move(hidden_specs));
  if (hidden_specs.size() != 1 && hidden_specs.size() != blocks)
    throw ShapeError("mlp_forward: one activation per block expected");

  MlpTrace trace;
  Tensor h = detail::to_blocks(x, blocks);
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor z = detail::add_bias(matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 == layers) {
      trace.logits = z;
    } else {
      h = activation(z, hidden_specs);
      trace.hidden.push_back(h);
    }
  }
  return trace;
}

namespace detail {

// Per-block selection or averaging of cell nodes.
struct MixPlan {
  std::vector<std::size_t> nodes;
  std::vector<double> coeffs;  // blocks x nodes
  bool passthrough = false;    // every block takes nodes[0] unchanged
};

inline MixPlan make_plan(const std::vector<std::vector<std::size_t>>& per_block) {
  MixPlan plan;
  for (const auto& sel : per_block)
    for (auto n : sel)
      if (std::find(plan.nodes.begin(), plan.nodes.end(), n) == plan.nodes.end())
        plan.nodes.push_back(n);
  std::sort(plan.nodes.begin(), plan.nodes.end());
  const std::size_t k = plan.nodes.size();
  plan.coeffs.assign(per_block.size() * k, 0.0);
  for (std::size_t b = 0; b < per_block.size(); ++b)
    for (auto n : per_block[b]) {
      const auto j = std::size_t(std::find(plan.nodes.begin(), plan.nodes.end(), n) - plan.nodes.begin());
      plan.coeffs[b * k + j] = 1.0 / double(per_block[b].size());
    }
  plan.passthrough = k == 1;
  return plan;
}

inline Tensor apply_plan(const MixPlan& plan, const std::vector<Tensor>& nodes) {
  if (plan.passthrough) return nodes[plan.nodes[0]];
  std::vector<Tensor> parts;
  for (auto n : plan.nodes) parts.push_back(nodes[n]);
  return block_mix(parts, plan.coeffs);
}

}  // namespace detail

/// Runs the cell recurrently over `x_seq` (batch, time, input), one encoding
/// per block. Returns output logits (blocks, time * batch, output), time-major.
inline Tensor cell_forward(const NetworkBlueprint& bp, std::span<const Tensor> params,
                           const Tensor& x_seq, std::span<const CellEncoding> encodings) {
  if (bp.kind != NetworkKind::recurrent_cell_lm) throw Error("cell_forward on a non-cell blueprint");
  const std::size_t nodes = CellEncoding::kNodes;
  if (params.size() != nodes + 3) throw ShapeError("cell_forward: wrong parameter count");
  if (x_seq.shape().size() != 3) throw ShapeError("cell input must be (batch, time, input)");
  const std::size_t blocks = params[0].shape()[0];
  const std::size_t batch = x_seq.shape()[0], steps = x_seq.shape()[1], in = x_seq.shape()[2];
  const std::size_t width = bp.layer_sizes[1];
  if (in != bp.input_size())
    throw ShapeError("cell_forward: input width " + std::to_string(in) + " != blueprint input " +
                     std::to_string(bp.input_size()));
  if (encodings.size() != blocks)
    throw InvalidEncoding("cell_forward: " + std::to_string(encodings.size()) +
                          " encodings for " + std::to_string(blocks) + " blocks");
  for (const auto& e : encodings) e.validate();

  std::vector<std::vector<ActSpec>> specs(nodes);
  std::vector<detail::MixPlan> inputs(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    std::vector<ActSpec> s;
    std::vector<std::vector<std::size_t>> sel;
    for (const auto& e : encodings) {
      s.push_back({e.node(i).activation, 1.0});
      sel.push_back({e.node(i).predecessor});
    }
    specs[i] = detail::collapse(std::move(s));
    if (i > 0) inputs[i] = detail::make_plan(sel);
  }
  std::vector<std::vector<std::size_t>> loose;
  for (const auto& e : encodings) loose.push_back(e.loose_ends());
  const detail::MixPlan readout = detail::make_plan(loose);

  const Tensor& Wx = params[0];
  const Tensor& Wh = params[1];
  const Tensor& Wo = params[nodes + 1];
  const Tensor& bo = params[nodes + 2];

  Tensor h = x_seq.graph().constant(Array({blocks, batch, width}));
  std::vector<Tensor> outputs;
  std::vector<Tensor> state(nodes);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor xt = detail::to_blocks(reshape(slice(x_seq, 1, t, 1), {batch, in}), blocks);
    state[0] = activation(add(matmul(xt, Wx), matmul(h, Wh)), specs[0]);
    for (std::size_t i = 1; i < nodes; ++i)
      state[i] = activation(matmul(detail::apply_plan(inputs[i], state), params[1 + i]), specs[i]);
    h = detail::apply_plan(readout, state);
    outputs.push_back(detail::add_bias(matmul(h, Wo), bo));
  }
  return concat(outputs, 1);
}

/// Rearranges labels to match the network's output rows: (batch, out) for an
/// mlp, (batch, time, out) -> (time * batch, out) for a cell.
inline Array arrange_targets(const NetworkBlueprint& bp, const Array& y) {
  if (bp.kind == NetworkKind::mlp) {
    if (y.rank() != 2 || y.shape[1] != bp.output_size())
      throw ShapeError("mlp targets must be (batch, output), got " + to_string(y.shape));
    return y;
  }
  if (y.rank() != 3 || y.shape[2] != bp.output_size())
    throw ShapeError("cell targets must be (batch, time, output), got " + to_string(y.shape));
  const std::size_t B = y.shape[0], T = y.shape[1], O = y.shape[2];
  Array out({T * B, O});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t o = 0; o < O; ++o) out.data[(t * B + b) * O + o] = y.data[(b * T + t) * O + o];
  return out;
}

// ---------------------------------------------------------------------------
// Losses.

/// Mean binary cross-entropy between probabilities and targets.
inline Tensor bce_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("bce_loss: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  Tensor pos = mul(target, log(pred));
  Tensor negative = mul(shift(neg(target), 1.0), log(shift(neg(pred), 1.0)));
  return neg(mean(add(pos, negative)));
}

/// Per-block mean BCE of sigmoid(logits) against fixed targets.
/// logits: (blocks, rows, cols); target: (rows, cols). Returns (blocks, 1, 1).
inline Tensor bce_with_logits_per_block(const Tensor& logits, const Array& target) {
  const auto& s = logits.shape();
  if (s.size() != 3 || target.rank() != 2 || s[1] != target.shape[0] || s[2] != target.shape[1])
    throw ShapeError("bce: logits " + to_string(s) + " vs targets " + to_string(target.shape));
  Array y({s[0], s[1], s[2]});
  for (std::size_t b = 0; b < s[0]; ++b)
    std::copy(target.data.begin(), target.data.end(),
              y.data.begin() + std::ptrdiff_t(b * target.size()));
  Tensor Y = logits.graph().constant(std::move(y));
  Tensor elem = sub(softplus(logits), mul(logits, Y));
  return scale(sum_axis(sum_axis(elem, 2), 1), 1.0 / double(s[1] * s[2]));
}

/// Per-block mean negative log-likelihood of integer class targets.
/// logits: (blocks, rows, classes). Returns (blocks, 1, 1).
inline Tensor cross_entropy_per_block(const Tensor& logits, std::span<const int> targets) {
  const auto& s = logits.shape();
  if (s.size() != 3 || targets.size() != s[1])
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     to_string(s));
  Array onehot(s);
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t r = 0; r < s[1]; ++r) {
      const int c = targets[r];
      if (c < 0 || std::size_t(c) >= s[2]) throw ShapeError("class index out of range");
      onehot.data[(b * s[1] + r) * s[2] + std::size_t(c)] = 1.0;
    }
  Tensor picked = mul(log_softmax(logits), logits.graph().constant(std::move(onehot)));
  return scale(sum_axis(sum_axis(picked, 2), 1), -1.0 / double(s[1]));
}

/// Splits a (blocks, 1, 1) tensor into one scalar per block.
inline std::vector<Tensor> split_blocks(const Tensor& per_block) {
  std::vector<Tensor> out;
  const std::size_t n = per_block.shape()[0];
  if (n == 1) {
    out.push_back(reshape(per_block, {1}));
    return out;
  }
  for (std::size_t b = 0; b < n; ++b) out.push_back(reshape(slice(per_block, 0, b, 1), {1}));
  return out;
}

/// lambda * sum of squares over all parameters; empty tensor when lambda = 0.
inline std::optional<Tensor> l2_penalty(std::span<const Tensor> params, double lambda) {
  if (lambda == 0.0 || params.empty()) return std::nullopt;
  Tensor acc = sum(square(params[0]));
  for (std::size_t i = 1; i < params.size(); ++i) acc = add(acc, sum(square(params[i])));
  return scale(acc, lambda);
}

// ---------------------------------------------------------------------------
// Optimizers.

enum class OptimizerKind { sgd, adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }
inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 0.01;
  double l2_penalty = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  /// Added to the bias-corrected second moment inside the square root.
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct OptimizerState {
  OptimizerState() = default;
  explicit OptimizerState(OptimizerConfig c) : config(c) {}

  OptimizerConfig config;
  std::size_t step = 0;
  std::vector<Array> m, v;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Graph-recorded optimizer state; moments are graph values.
struct GraphOptimizerState {
  GraphOptimizerState() = default;
  explicit GraphOptimizerState(OptimizerConfig c) : config(c) {}

  OptimizerConfig config;
  std::size_t step = 0;
  std::vector<Tensor> m, v;
};

namespace detail {
struct AdamScalars {
  double b1, one_minus_b1, b2, one_minus_b2, c1, c2;
};
inline AdamScalars adam_scalars(const OptimizerConfig& c, std::size_t t) {
  return {c.beta1,
          1.0 - c.beta1,
          c.beta2,
          1.0 - c.beta2,
          1.0 / (1.0 - std::pow(c.beta1, double(t))),
          1.0 / (1.0 - std::pow(c.beta2, double(t)))};
}
}  // namespace detail

/// Plain update, in place. Arithmetic matches the graph-recorded overload
/// operation for operation.
inline void optimizer_step(std::vector<Array>& params, const std::vector<Array>& grads,
                           OptimizerState& state) {
  if (params.size() != grads.size()) throw ShapeError("optimizer_step: grads do not align");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape != grads[i].shape)
      throw ShapeError("optimizer_step: grad shape " + to_string(grads[i].shape) +
                       " != param shape " + to_string(params[i].shape));
  const auto& cfg = state.config;
  if (cfg.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < params[i].size(); ++k)
        params[i].data[k] = params[i].data[k] - grads[i].data[k] * cfg.learning_rate;
    ++state.step;
    return;
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape);
      state.v.emplace_back(p.shape);
    }
  }
  ++state.step;
  const auto k = detail::adam_scalars(cfg, state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const auto& g = grads[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = m[j] * k.b1 + g[j] * k.one_minus_b1;
      v[j] = v[j] * k.b2 + (g[j] * g[j]) * k.one_minus_b2;
      const double denom = std::sqrt(v[j] * k.c2 + cfg.epsilon);
      p[j] = p[j] - ((m[j] * k.c1) / denom) * cfg.learning_rate;
    }
  }
}

/// Differentiable update: the new parameters are graph functions of the old
/// parameters and gradients.
inline std::vector<Tensor> optimizer_step(std::span<const Tensor> params,
                                          std::span<const Tensor> grads,
                                          GraphOptimizerState& state) {
  if (params.size() != grads.size()) throw ShapeError("optimizer_step: grads do not align");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape() != grads[i].shape())
      throw ShapeError("optimizer_step: grad shape " + to_string(grads[i].shape()) +
                       " != param shape " + to_string(params[i].shape()));
  const auto& cfg = state.config;
  std::vector<Tensor> out;
  if (cfg.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i)
      out.push_back(sub(params[i], scale(grads[i], cfg.learning_rate)));
    ++state.step;
    return out;
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(p.graph().constant(Array(p.shape())));
      state.v.push_back(p.graph().constant(Array(p.shape())));
    }
  }
  ++state.step;
  const auto k = detail::adam_scalars(cfg, state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = grads[i];
    state.m[i] = add(scale(state.m[i], k.b1), scale(g, k.one_minus_b1));
    state.v[i] = add(scale(state.v[i], k.b2), scale(square(g), k.one_minus_b2));
    Tensor denom = sqrt(shift(scale(state.v[i], k.c2), cfg.epsilon));
    out.push_back(sub(params[i], scale(div(scale(state.m[i], k.c1), denom), cfg.learning_rate)));
  }
  return out;
}

/// ParamSet form of the plain update.
inline ParamSet optimizer_step(ParamSet params, const std::vector<Array>& grads,
                               OptimizerState& state) {
  optimizer_step(params.tensors, grads, state);
  return params;
}

/// One plain training step on `params`: builds the loss in a scratch graph,
/// adds the L2 penalty from the optimizer config, and applies the update.
/// Returns the loss before the penalty.
template <class LossFn>
double train_step(ParamSet& params, OptimizerState& opt, LossFn&& loss_fn) {
  Graph g;
  auto leaves = param_leaves(g, params, true);
  Tensor loss = loss_fn(g, std::span<const Tensor>(leaves));
  const double value = loss.item();
  if (!std::isfinite(value)) throw NonFiniteLoss("training loss is not finite");
  Tensor total = loss;
  if (auto pen = l2_penalty(leaves, opt.config.l2_penalty)) total = add(total, *pen);
  auto grads = backward(total, leaves, false);
  std::vector<Array> g_values;
  g_values.reserve(grads.size());
  for (const auto& t : grads) g_values.push_back(t.value());
  optimizer_step(params.tensors, g_values, opt);
  return value;
}

// ---------------------------------------------------------------------------
// Motif-networks.

/// A miniature network instantiating one motif per block. A super-network is
/// simply a MotifNetwork with several blocks.
struct MotifNetwork {
  std::vector<Motif> motifs;
  NetworkBlueprint blueprint;
  ParamSet params;

  std::size_t blocks() const { return motifs.size(); }
};

inline void check_motif_slot(const NetworkBlueprint& bp, std::span<const Motif> motifs) {
  require_homogeneous(motifs);
  const bool want_slope = bp.kind == NetworkKind::mlp;
  if (motifs.front().is_slope() != want_slope)
    throw MixedVariants(std::string("blueprint '") + to_string(bp.kind) + "' cannot host " +
                        (motifs.front().is_slope() ? "slope" : "cell") + " motifs");
}

/// One network per motif, all sharing identical initial parameters.
inline std::vector<MotifNetwork> instantiate(std::span<const Motif> motifs,
                                             const NetworkBlueprint& bp, std::uint64_t seed) {
  check_motif_slot(bp, motifs);
  const ParamSet theta_init = init_params(bp, seed);
  std::vector<MotifNetwork> out;
  out.reserve(motifs.size());
  for (const auto& m : motifs) out.push_back({{m}, bp, theta_init});
  return out;
}

/// Stacks networks of one blueprint into a block-diagonal super-network.
inline MotifNetwork build_super_network(std::span<const MotifNetwork> nets) {
  if (nets.empty()) throw HeterogeneousBlueprints("no networks to combine");
  MotifNetwork out;
  out.blueprint = nets.front().blueprint;
  out.params.names = nets.front().params.names;
  out.params.init_seed = nets.front().params.init_seed;
  for (const auto& n : nets) {
    if (!(n.blueprint == out.blueprint) || n.params.names != out.params.names)
      throw HeterogeneousBlueprints("networks do not share one blueprint");
    out.motifs.insert(out.motifs.end(), n.motifs.begin(), n.motifs.end());
  }
  check_motif_slot(out.blueprint, out.motifs);
  for (std::size_t i = 0; i < out.params.names.size(); ++i) {
    const Shape& s0 = nets.front().params.tensors[i].shape;
    Shape s = s0;
    s[0] = 0;
    std::vector<double> data;
    for (const auto& n : nets) {
      const Array& t = n.params.tensors[i];
      if (t.shape[1] != s0[1] || t.shape[2] != s0[2])
        throw HeterogeneousBlueprints("parameter '" + out.params.names[i] + "' shapes differ");
      s[0] += t.shape[0];
      data.insert(data.end(), t.data.begin(), t.data.end());
    }
    out.params.tensors.emplace_back(s, std::move(data));
  }
  return out;
}

/// Inverse of build_super_network: one single-block network per motif.
inline std::vector<MotifNetwork> split_super_network(const MotifNetwork& net) {
  std::vector<MotifNetwork> out;
  for (std::size_t b = 0; b < net.blocks(); ++b) {
    MotifNetwork part{{net.motifs[b]}, net.blueprint, {}};
    part.params.names = net.params.names;
    part.params.init_seed = net.params.init_seed;
    for (const auto& t : net.params.tensors) {
      const std::size_t per = t.size() / t.shape[0];
      part.params.tensors.emplace_back(
          Shape{1, t.shape[1], t.shape[2]},
          std::vector<double>(t.data.begin() + std::ptrdiff_t(b * per),
                              t.data.begin() + std::ptrdiff_t((b + 1) * per)));
    }
    out.push_back(std::move(part));
  }
  return out;
}

/// Output logits of a motif-network (any number of blocks).
inline Tensor network_logits(const MotifNetwork& net, std::span<const Tensor> params,
                             const Tensor& x) {
  if (net.blueprint.kind == NetworkKind::mlp)
    return mlp_forward(net.blueprint, params, x, slope_specs(net.motifs)).logits;
  std::vector<CellEncoding> enc;
  for (const auto& m : net.motifs) {
    if (!m.is_cell()) throw MixedVariants("cell slot expects cell motifs");
    enc.push_back(m.encoding());
  }
  return cell_forward(net.blueprint, params, x, enc);
}

}  // namespace petridish
