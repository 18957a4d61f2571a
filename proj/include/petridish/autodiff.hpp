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

// Reverse-mode automatic differentiation over an explicit, append-only
// computation graph. Backward passes are emitted as ordinary graph ops, so a
// gradient computed with create_graph=true can itself be differentiated.
//
// Tensors are row-major, rank 1 to 3, double precision. The only implicit
// broadcast is a one-element operand in an elementwise binary op; everything
// else (bias rows, per-block replication) goes through expand/sum_axis.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "petridish/error.hpp"

namespace petridish {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

/// Dense row-major value with no graph attached.
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {
    validate();
  }
  Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) { validate(); }

  static Array scalar(double v) { return Array({1}, std::vector<double>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  double item() const {
    if (data.size() != 1) throw ShapeError("item() on non-scalar of shape " + to_string(shape));
    return data[0];
  }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  friend bool operator==(const Array&, const Array&) = default;

 private:
  void validate() const {
    if (shape.empty() || shape.size() > 3)
      throw ShapeError("rank must be 1..3, got shape " + to_string(shape));
    for (auto d : shape)
      if (d == 0) throw ShapeError("zero-sized dimension in shape " + to_string(shape));
    if (numel(shape) != data.size())
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                       to_string(shape));
  }
};

enum class Activation : std::uint8_t { identity, tanh, relu, sigmoid, softplus };

/// Elementwise nonlinearity. `slope` is the c in 1/(1+exp(-c x)) and only
/// affects sigmoid.
struct ActSpec {
  Activation kind = Activation::identity;
  double slope = 1.0;
  friend bool operator==(const ActSpec&, const ActSpec&) = default;
};

namespace detail {

// k-th derivative of the logistic function expressed through s = sigma(z).
inline double logistic_derivative(double s, int k) {
  switch (k) {
    case 0: return s;
    case 1: return s * (1.0 - s);
    case 2: return s * (1.0 - s) * (1.0 - 2.0 * s);
    case 3: return s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s);
    default: throw Error("logistic derivative of order " + std::to_string(k) + " not supported");
  }
}

inline double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// order-th derivative of the activation evaluated at x.
inline double activate(const ActSpec& spec, int order, double x) {
  switch (spec.kind) {
    case Activation::identity:
      return order == 0 ? x : (order == 1 ? 1.0 : 0.0);
    case Activation::relu:
      if (order == 0) return x > 0 ? x : 0.0;
      return order == 1 ? (x > 0 ? 1.0 : 0.0) : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      const double d = 1.0 - t * t;
      switch (order) {
        case 0: return t;
        case 1: return d;
        case 2: return -2.0 * t * d;
        case 3: return d * (6.0 * t * t - 2.0);
        default: throw Error("tanh derivative of order " + std::to_string(order) + " not supported");
      }
    }
    case Activation::sigmoid: {
      const double c = spec.slope;
      const double s = logistic(c * x);
      return std::pow(c, order) * logistic_derivative(s, order);
    }
    case Activation::softplus:
      if (order == 0) return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      return logistic_derivative(logistic(x), order - 1);
  }
  return 0.0;
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

inline AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace detail

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  scale,
  shift,
  matmul,
  activation,
  exp,
  log,
  sqrt,
  square,
  sum,
  mean,
  sum_axis,
  expand,
  broadcast,
  reshape,
  concat,
  slice,
  pad,
  block_mix,
  softmax,
  log_softmax,
};

/// Op parameters that are not tensors. Unused fields stay default.
struct OpAttr {
  double scalar = 0.0;
  std::size_t axis = 0;
  std::size_t start = 0;
  std::size_t extent = 0;
  bool transpose_a = false;
  bool transpose_b = false;
  int order = 0;
  std::vector<ActSpec> acts;
  std::vector<double> coeffs;
  Shape shape;
};

struct Node {
  Op op = Op::leaf;
  std::vector<std::size_t> inputs;
  Array value;
  bool requires_grad = false;
  OpAttr attr;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the node exists.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Array& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only operation record. Single writer; distinct graphs are
/// independent and may be used from different threads.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = default;
  Graph& operator=(const Graph&) = default;

  Tensor leaf(Array value, bool requires_grad) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }
  Tensor constant(Array value) { return leaf(std::move(value), false); }
  Tensor variable(Array value) { return leaf(std::move(value), true); }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }

  /// Drops every node with id >= mark. Handles to them become invalid.
  void rewind(std::size_t mark) {
    while (nodes_.size() > mark) nodes_.pop_back();
  }

  /// Re-executes every recorded op, with the given leaves replaced. Returns
  /// the replayed graph; this graph is untouched.
  Graph replay(std::span<const std::pair<std::size_t, Array>> leaves) const {
    Graph g(*this);
    for (const auto& [id, value] : leaves) {
      Node& n = g.nodes_.at(id);
      if (n.op != Op::leaf) throw Error("replay override targets a non-leaf node");
      if (n.value.shape != value.shape)
        throw ShapeError("replay override shape " + to_string(value.shape) + " != " +
                         to_string(n.value.shape));
      n.value = value;
    }
    for (auto& n : g.nodes_) {
      if (n.op == Op::leaf) continue;
      n.value = g.evaluate(n.op, n.inputs, n.attr);
    }
    return g;
  }

  Tensor apply(Op op, std::vector<std::size_t> inputs, OpAttr attr = {}) {
    Node n;
    n.value = evaluate(op, inputs, attr);
    n.op = op;
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](std::size_t i) { return nodes_[i].requires_grad; });
    n.inputs = std::move(inputs);
    n.attr = std::move(attr);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

 private:
  const Array& val(std::size_t id) const { return nodes_[id].value; }

  Array evaluate(Op op, const std::vector<std::size_t>& in, const OpAttr& attr) const;

  std::deque<Node> nodes_;
};

inline const Array& Tensor::value() const { return graph_->node(id_).value; }
inline bool Tensor::requires_grad() const { return graph_->node(id_).requires_grad; }

// ---------------------------------------------------------------------------
// Forward evaluation.

namespace detail {

inline Shape binary_shape(const char* name, const Array& a, const Array& b) {
  if (a.shape == b.shape) return a.shape;
  if (a.size() == 1) return b.shape;
  if (b.size() == 1) return a.shape;
  throw ShapeError(std::string(name) + ": shape mismatch " + to_string(a.shape) + " vs " +
                   to_string(b.shape));
}

template <class F>
Array binary(const char* name, const Array& a, const Array& b, F f) {
  Array out(binary_shape(name, a, b));
  const bool sa = a.size() == 1 && out.size() != 1;
  const bool sb = b.size() == 1 && out.size() != 1;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = f(a.data[sa ? 0 : i], b.data[sb ? 0 : i]);
  return out;
}

template <class F>
Array unary(const Array& a, F f) {
  Array out(a.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f(a.data[i]);
  return out;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Array matmul(const Array& a, const Array& b, bool ta, bool tb) {
  if (a.rank() != b.rank() || a.rank() < 2)
    throw ShapeError("matmul: operands must both be rank 2 or rank 3, got " + to_string(a.shape) +
                     " and " + to_string(b.shape));
  const bool batched = a.rank() == 3;
  const std::size_t batch = batched ? a.shape[0] : 1;
  if (batched && b.shape[0] != batch)
    throw ShapeError("matmul: batch mismatch " + to_string(a.shape) + " vs " + to_string(b.shape));
  const std::size_t ar = a.shape[a.rank() - 2], ac = a.shape[a.rank() - 1];
  const std::size_t br = b.shape[b.rank() - 2], bc = b.shape[b.rank() - 1];
  const std::size_t m = ta ? ac : ar, k = ta ? ar : ac;
  const std::size_t k2 = tb ? bc : br, n = tb ? br : bc;
  if (k != k2)
    throw ShapeError("matmul: inner dimension mismatch " + to_string(a.shape) + " vs " +
                     to_string(b.shape));
  Array out(batched ? Shape{batch, m, n} : Shape{m, n});
  for (std::size_t p = 0; p < batch; ++p) {
    Eigen::Map<const RowMat> A(a.data.data() + p * ar * ac, Eigen::Index(ar), Eigen::Index(ac));
    Eigen::Map<const RowMat> B(b.data.data() + p * br * bc, Eigen::Index(br), Eigen::Index(bc));
    Eigen::Map<RowMat> C(out.data.data() + p * m * n, Eigen::Index(m), Eigen::Index(n));
    if (!ta && !tb) C.noalias() = A * B;
    else if (!ta && tb) C.noalias() = A * B.transpose();
    else if (ta && !tb) C.noalias() = A.transpose() * B;
    else C.noalias() = A.transpose() * B.transpose();
  }
  return out;
}

inline void check_axis(const char* name, const Array& a, std::size_t axis) {
  if (axis >= a.rank())
    throw ShapeError(std::string(name) + ": axis " + std::to_string(axis) + " out of range for " +
                     to_string(a.shape));
}

}  // namespace detail

inline Array Graph::evaluate(Op op, const std::vector<std::size_t>& in, const OpAttr& attr) const {
  using namespace detail;
  switch (op) {
    case Op::leaf:
      throw Error("cannot evaluate a leaf");
    case Op::add:
      return binary("add", val(in[0]), val(in[1]), [](double x, double y) { return x + y; });
    case Op::sub:
      return binary("sub", val(in[0]), val(in[1]), [](double x, double y) { return x - y; });
    case Op::mul:
      return binary("mul", val(in[0]), val(in[1]), [](double x, double y) { return x * y; });
    case Op::div:
      return binary("div", val(in[0]), val(in[1]), [](double x, double y) { return x / y; });
    case Op::scale: {
      const double c = attr.scalar;
      return unary(val(in[0]), [c](double x) { return x * c; });
    }
    case Op::shift: {
      const double c = attr.scalar;
      return unary(val(in[0]), [c](double x) { return x + c; });
    }
    case Op::matmul:
      return matmul(val(in[0]), val(in[1]), attr.transpose_a, attr.transpose_b);
    case Op::activation: {
      const Array& a = val(in[0]);
      Array out(a.shape);
      if (attr.acts.size() == 1) {
        for (std::size_t i = 0; i < a.size(); ++i)
          out.data[i] = activate(attr.acts[0], attr.order, a.data[i]);
        return out;
      }
      if (a.shape[0] != attr.acts.size())
        throw ShapeError("activation: " + std::to_string(attr.acts.size()) +
                         " block specs for shape " + to_string(a.shape));
      const std::size_t per = a.size() / a.shape[0];
      for (std::size_t blk = 0; blk < a.shape[0]; ++blk)
        for (std::size_t i = blk * per; i < (blk + 1) * per; ++i)
          out.data[i] = activate(attr.acts[blk], attr.order, a.data[i]);
      return out;
    }
    case Op::exp:
      return unary(val(in[0]), [](double x) { return std::exp(x); });
    case Op::log:
      return unary(val(in[0]), [](double x) { return std::log(x); });
    case Op::sqrt:
      return unary(val(in[0]), [](double x) { return std::sqrt(x); });
    case Op::square:
      return unary(val(in[0]), [](double x) { return x * x; });
    case Op::sum: {
      double s = 0.0;
      for (double x : val(in[0]).data) s += x;
      return Array::scalar(s);
    }
    case Op::mean: {
      const Array& a = val(in[0]);
      double s = 0.0;
      for (double x : a.data) s += x;
      return Array::scalar(s / double(a.size()));
    }
    case Op::sum_axis: {
      const Array& a = val(in[0]);
      check_axis("sum_axis", a, attr.axis);
      Shape s = a.shape;
      s[attr.axis] = 1;
      Array out(s);
      const auto sp = split_at(a.shape, attr.axis);
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t e = 0; e < sp.extent; ++e)
          for (std::size_t i = 0; i < sp.inner; ++i)
            out.data[o * sp.inner + i] += a.data[(o * sp.extent + e) * sp.inner + i];
      return out;
    }
    case Op::expand: {
      const Array& a = val(in[0]);
      check_axis("expand", a, attr.axis);
      if (a.shape[attr.axis] != 1)
        throw ShapeError("expand: axis " + std::to_string(attr.axis) + " of " +
                         to_string(a.shape) + " is not 1");
      Shape s = a.shape;
      s[attr.axis] = attr.extent;
      Array out(s);
      const auto sp = split_at(s, attr.axis);
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t e = 0; e < sp.extent; ++e)
          for (std::size_t i = 0; i < sp.inner; ++i)
            out.data[(o * sp.extent + e) * sp.inner + i] = a.data[o * sp.inner + i];
      return out;
    }
    case Op::broadcast: {
      const Array& a = val(in[0]);
      if (a.size() != 1) throw ShapeError("broadcast: operand is not a scalar " + to_string(a.shape));
      return Array(attr.shape, a.data[0]);
    }
    case Op::reshape: {
      const Array& a = val(in[0]);
      if (numel(attr.shape) != a.size())
        throw ShapeError("reshape: " + to_string(a.shape) + " -> " + to_string(attr.shape));
      return Array(attr.shape, a.data);
    }
    case Op::concat: {
      const Array& first = val(in[0]);
      check_axis("concat", first, attr.axis);
      Shape s = first.shape;
      s[attr.axis] = 0;
      for (auto id : in) {
        const Array& p = val(id);
        Shape a = p.shape, b = first.shape;
        if (a.size() != b.size()) throw ShapeError("concat: rank mismatch");
        a[attr.axis] = b[attr.axis] = 0;
        if (a != b)
          throw ShapeError("concat: shape mismatch " + to_string(p.shape) + " vs " +
                           to_string(first.shape));
        s[attr.axis] += p.shape[attr.axis];
      }
      Array out(s);
      const auto sp = split_at(s, attr.axis);
      std::size_t offset = 0;
      for (auto id : in) {
        const Array& p = val(id);
        const std::size_t e = p.shape[attr.axis];
        for (std::size_t o = 0; o < sp.outer; ++o)
          std::copy_n(p.data.begin() + std::ptrdiff_t(o * e * sp.inner), e * sp.inner,
                      out.data.begin() + std::ptrdiff_t((o * sp.extent + offset) * sp.inner));
        offset += e;
      }
      return out;
    }
    case Op::slice: {
      const Array& a = val(in[0]);
      check_axis("slice", a, attr.axis);
      if (attr.extent == 0 || attr.start + attr.extent > a.shape[attr.axis])
        throw ShapeError("slice: range [" + std::to_string(attr.start) + ", " +
                         std::to_string(attr.start + attr.extent) + ") out of bounds for " +
                         to_string(a.shape));
      Shape s = a.shape;
      s[attr.axis] = attr.extent;
      Array out(s);
      const auto sp = split_at(a.shape, attr.axis);
      for (std::size_t o = 0; o < sp.outer; ++o)
        std::copy_n(a.data.begin() + std::ptrdiff_t((o * sp.extent + attr.start) * sp.inner),
                    attr.extent * sp.inner,
                    out.data.begin() + std::ptrdiff_t(o * attr.extent * sp.inner));
      return out;
    }
    case Op::pad: {
      const Array& a = val(in[0]);
      check_axis("pad", a, attr.axis);
      if (attr.start + a.shape[attr.axis] > attr.extent)
        throw ShapeError("pad: operand does not fit into target extent");
      Shape s = a.shape;
      s[attr.axis] = attr.extent;
      Array out(s);
      const auto sp = split_at(s, attr.axis);
      const std::size_t e = a.shape[attr.axis];
      for (std::size_t o = 0; o < sp.outer; ++o)
        std::copy_n(a.data.begin() + std::ptrdiff_t(o * e * sp.inner), e * sp.inner,
                    out.data.begin() + std::ptrdiff_t((o * sp.extent + attr.start) * sp.inner));
      return out;
    }
    case Op::block_mix: {
      const Array& first = val(in[0]);
      const std::size_t k = in.size();
      const std::size_t blocks = first.shape[0];
      if (attr.coeffs.size() != blocks * k)
        throw ShapeError("block_mix: expected " + std::to_string(blocks * k) + " coefficients");
      for (auto id : in)
        if (val(id).shape != first.shape)
          throw ShapeError("block_mix: shape mismatch " + to_string(val(id).shape) + " vs " +
                           to_string(first.shape));
      Array out(first.shape);
      const std::size_t per = first.size() / blocks;
      for (std::size_t blk = 0; blk < blocks; ++blk) {
        bool started = false;
        for (std::size_t j = 0; j < k; ++j) {
          const double c = attr.coeffs[blk * k + j];
          if (c == 0.0) continue;
          const Array& src = val(in[j]);
          for (std::size_t i = blk * per; i < (blk + 1) * per; ++i)
            out.data[i] = started ? out.data[i] + c * src.data[i] : c * src.data[i];
          started = true;
        }
      }
      return out;
    }
    case Op::softmax:
    case Op::log_softmax: {
      const Array& a = val(in[0]);
      Array out(a.shape);
      const std::size_t n = a.shape.back();
      for (std::size_t r = 0; r < a.size() / n; ++r) {
        const double* x = a.data.data() + r * n;
        double* y = out.data.data() + r * n;
        const double mx = *std::max_element(x, x + n);
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - mx);
        if (op == Op::softmax) {
          for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i] - mx) / z;
        } else {
          const double lz = std::log(z);
          for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - mx - lz;
        }
      }
      return out;
    }
  }
  throw Error("unknown op");
}

// ---------------------------------------------------------------------------
// Op constructors.

namespace detail {
inline Graph& same_graph(const Tensor& a, const Tensor& b) {
  if (&a.graph() != &b.graph()) throw Error("operands belong to different graphs");
  return a.graph();
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::same_graph(a, b).apply(Op::add, {a.id(), b.id()});
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::same_graph(a, b).apply(Op::sub, {a.id(), b.id()});
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::same_graph(a, b).apply(Op::mul, {a.id(), b.id()});
}
inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::same_graph(a, b).apply(Op::div, {a.id(), b.id()});
}
inline Tensor scale(const Tensor& a, double c) {
  OpAttr at;
  at.scalar = c;
  return a.graph().apply(Op::scale, {a.id()}, std::move(at));
}
/// a + c elementwise for a constant c.
inline Tensor shift(const Tensor& a, double c) {
  OpAttr at;
  at.scalar = c;
  return a.graph().apply(Op::shift, {a.id()}, std::move(at));
}
inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

/// op(a) @ op(b) on rank-2 operands, or blockwise on rank-3 operands with a
/// shared leading block dimension.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
                     bool transpose_b = false) {
  OpAttr at;
  at.transpose_a = transpose_a;
  at.transpose_b = transpose_b;
  return detail::same_graph(a, b).apply(Op::matmul, {a.id(), b.id()}, std::move(at));
}

/// Elementwise activation (or its order-th derivative). `specs` holds one
/// entry for the whole tensor or one per leading block.
inline Tensor activation(const Tensor& x, std::vector<ActSpec> specs, int order = 0) {
  if (specs.empty()) throw ShapeError("activation: no specs");
  OpAttr at;
  at.acts = std::move(specs);
  at.order = order;
  return x.graph().apply(Op::activation, {x.id()}, std::move(at));
}
inline Tensor sigmoid_slope(const Tensor& x, double slope) {
  return activation(x, {{Activation::sigmoid, slope}});
}
inline Tensor sigmoid(const Tensor& x) { return sigmoid_slope(x, 1.0); }
inline Tensor tanh(const Tensor& x) { return activation(x, {{Activation::tanh, 1.0}}); }
inline Tensor relu(const Tensor& x) { return activation(x, {{Activation::relu, 1.0}}); }
inline Tensor identity(const Tensor& x) { return activation(x, {{Activation::identity, 1.0}}); }
inline Tensor softplus(const Tensor& x) { return activation(x, {{Activation::softplus, 1.0}}); }

inline Tensor exp(const Tensor& x) { return x.graph().apply(Op::exp, {x.id()}); }
inline Tensor log(const Tensor& x) { return x.graph().apply(Op::log, {x.id()}); }
inline Tensor sqrt(const Tensor& x) { return x.graph().apply(Op::sqrt, {x.id()}); }
inline Tensor square(const Tensor& x) { return x.graph().apply(Op::square, {x.id()}); }
inline Tensor sum(const Tensor& x) { return x.graph().apply(Op::sum, {x.id()}); }
inline Tensor mean(const Tensor& x) { return x.graph().apply(Op::mean, {x.id()}); }

inline Tensor sum_axis(const Tensor& x, std::size_t axis) {
  OpAttr at;
  at.axis = axis;
  return x.graph().apply(Op::sum_axis, {x.id()}, std::move(at));
}
/// Repeats a size-1 axis `n` times.
inline Tensor expand(const Tensor& x, std::size_t axis, std::size_t n) {
  OpAttr at;
  at.axis = axis;
  at.extent = n;
  return x.graph().apply(Op::expand, {x.id()}, std::move(at));
}
/// Fills `shape` with the single value of a one-element tensor.
inline Tensor broadcast(const Tensor& x, Shape shape) {
  OpAttr at;
  at.shape = std::move(shape);
  return x.graph().apply(Op::broadcast, {x.id()}, std::move(at));
}
inline Tensor reshape(const Tensor& x, Shape shape) {
  OpAttr at;
  at.shape = std::move(shape);
  return x.graph().apply(Op::reshape, {x.id()}, std::move(at));
}
inline Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    detail::same_graph(parts[0], p);
    ids.push_back(p.id());
  }
  OpAttr at;
  at.axis = axis;
  return parts[0].graph().apply(Op::concat, std::move(ids), std::move(at));
}
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  OpAttr at;
  at.axis = axis;
  at.start = start;
  at.extent = length;
  return x.graph().apply(Op::slice, {x.id()}, std::move(at));
}
/// Zero-pads `axis` to `total`, placing x at offset `start`. Adjoint of slice.
inline Tensor pad(const Tensor& x, std::size_t axis, std::size_t start, std::size_t total) {
  OpAttr at;
  at.axis = axis;
  at.start = start;
  at.extent = total;
  return x.graph().apply(Op::pad, {x.id()}, std::move(at));
}
/// out[n] = sum_j coeffs[n * k + j] * parts[j][n] over the leading block axis.
/// Coefficients are constants, so the op is linear in its operands.
inline Tensor block_mix(std::span<const Tensor> parts, std::vector<double> coeffs) {
  if (parts.empty()) throw ShapeError("block_mix: no operands");
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    detail::same_graph(parts[0], p);
    ids.push_back(p.id());
  }
  OpAttr at;
  at.coeffs = std::move(coeffs);
  return parts[0].graph().apply(Op::block_mix, std::move(ids), std::move(at));
}
inline Tensor softmax(const Tensor& x) { return x.graph().apply(Op::softmax, {x.id()}); }
inline Tensor log_softmax(const Tensor& x) { return x.graph().apply(Op::log_softmax, {x.id()}); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

// ---------------------------------------------------------------------------
// Reverse mode.

namespace detail {

// Reduces a gradient of the broadcast output back to a one-element operand.
inline Tensor unbroadcast(const Tensor& g, const Shape& operand) {
  if (g.shape() == operand) return g;
  return reshape(sum(g), operand);
}

/// Vector-Jacobian product of node `id` given the upstream gradient `g`.
/// Entries are empty for inputs that do not require a gradient, or that
/// `keep` rejects.
template <class Keep>
std::vector<std::optional<Tensor>> vjp(Graph& graph, std::size_t id, const Tensor& g, Keep keep) {
  // Copy what we need: appending nodes must not alias the record we read.
  const Node node = [&] {
    const Node& n = graph.node(id);
    Node c;
    c.op = n.op;
    c.inputs = n.inputs;
    c.attr = n.attr;
    return c;
  }();
  const auto& in = node.inputs;
  std::vector<std::optional<Tensor>> out(in.size());
  auto wants = [&](std::size_t j) { return graph.node(in[j]).requires_grad && keep(in[j]); };
  auto T = [&](std::size_t nid) { return Tensor(&graph, nid); };
  const Tensor y = T(id);
  const OpAttr& at = node.attr;

  switch (node.op) {
    case Op::leaf:
      break;
    case Op::add:
      for (std::size_t j = 0; j < 2; ++j)
        if (wants(j)) out[j] = unbroadcast(g, T(in[j]).shape());
      break;
    case Op::sub:
      if (wants(0)) out[0] = unbroadcast(g, T(in[0]).shape());
      if (wants(1)) out[1] = unbroadcast(neg(g), T(in[1]).shape());
      break;
    case Op::mul:
      if (wants(0)) out[0] = unbroadcast(mul(g, T(in[1])), T(in[0]).shape());
      if (wants(1)) out[1] = unbroadcast(mul(g, T(in[0])), T(in[1]).shape());
      break;
    case Op::div:
      if (wants(0)) out[0] = unbroadcast(div(g, T(in[1])), T(in[0]).shape());
      if (wants(1)) out[1] = unbroadcast(neg(div(mul(g, y), T(in[1]))), T(in[1]).shape());
      break;
    case Op::scale:
      if (wants(0)) out[0] = scale(g, at.scalar);
      break;
    case Op::shift:
      if (wants(0)) out[0] = g;
      break;
    case Op::matmul: {
      const Tensor a = T(in[0]), b = T(in[1]);
      const bool ta = at.transpose_a, tb = at.transpose_b;
      if (wants(0)) {
        if (!ta && !tb) out[0] = matmul(g, b, false, true);
        else if (!ta && tb) out[0] = matmul(g, b, false, false);
        else if (ta && !tb) out[0] = matmul(b, g, false, true);
        else out[0] = matmul(b, g, true, true);
      }
      if (wants(1)) {
        if (!ta && !tb) out[1] = matmul(a, g, true, false);
        else if (!ta && tb) out[1] = matmul(g, a, true, false);
        else if (ta && !tb) out[1] = matmul(a, g, false, false);
        else out[1] = matmul(g, a, true, true);
      }
      break;
    }
    case Op::activation: {
      const bool linear_all = std::all_of(at.acts.begin(), at.acts.end(), [](const ActSpec& s) {
        return s.kind == Activation::identity;
      });
      if (wants(0)) {
        if (linear_all && at.order == 0) out[0] = g;
        else out[0] = mul(g, activation(T(in[0]), at.acts, at.order + 1));
      }
      break;
    }
    case Op::exp:
      if (wants(0)) out[0] = mul(g, y);
      break;
    case Op::log:
      if (wants(0)) out[0] = div(g, T(in[0]));
      break;
    case Op::sqrt:
      if (wants(0)) out[0] = div(g, scale(y, 2.0));
      break;
    case Op::square:
      if (wants(0)) out[0] = mul(g, scale(T(in[0]), 2.0));
      break;
    case Op::sum:
      if (wants(0)) out[0] = broadcast(g, T(in[0]).shape());
      break;
    case Op::mean:
      if (wants(0)) {
        const Shape& s = T(in[0]).shape();
        out[0] = broadcast(scale(g, 1.0 / double(numel(s))), s);
      }
      break;
    case Op::sum_axis:
      if (wants(0)) out[0] = expand(g, at.axis, T(in[0]).shape()[at.axis]);
      break;
    case Op::expand:
      if (wants(0)) out[0] = sum_axis(g, at.axis);
      break;
    case Op::broadcast:
      if (wants(0)) out[0] = reshape(sum(g), T(in[0]).shape());
      break;
    case Op::reshape:
      if (wants(0)) out[0] = reshape(g, T(in[0]).shape());
      break;
    case Op::concat: {
      std::size_t offset = 0;
      for (std::size_t j = 0; j < in.size(); ++j) {
        const std::size_t e = T(in[j]).shape()[at.axis];
        if (wants(j)) out[j] = slice(g, at.axis, offset, e);
        offset += e;
      }
      break;
    }
    case Op::slice:
      if (wants(0)) out[0] = pad(g, at.axis, at.start, T(in[0]).shape()[at.axis]);
      break;
    case Op::pad:
      if (wants(0)) out[0] = slice(g, at.axis, at.start, T(in[0]).shape()[at.axis]);
      break;
    case Op::block_mix: {
      const std::size_t k = in.size();
      const std::size_t blocks = at.coeffs.size() / k;
      for (std::size_t j = 0; j < k; ++j) {
        if (!wants(j)) continue;
        std::vector<double> c(blocks);
        for (std::size_t b = 0; b < blocks; ++b) c[b] = at.coeffs[b * k + j];
        const Tensor parts[] = {g};
        out[j] = block_mix(parts, std::move(c));
      }
      break;
    }
    case Op::softmax:
      if (wants(0)) {
        const std::size_t last = y.shape().size() - 1;
        const Tensor s = sum_axis(mul(g, y), last);
        out[0] = mul(y, sub(g, expand(s, last, y.shape()[last])));
      }
      break;
    case Op::log_softmax:
      if (wants(0)) {
        const std::size_t last = y.shape().size() - 1;
        const Tensor s = sum_axis(g, last);
        out[0] = sub(g, mul(exp(y), expand(s, last, y.shape()[last])));
      }
      break;
  }
  return out;
}

}  // namespace detail

/// Gradients of the scalar `root` with respect to each tensor in `wrt`.
///
/// With create_graph=true the returned gradients are graph nodes that depend
/// on the inputs and can be differentiated again. With create_graph=false the
/// intermediate nodes are discarded and the gradients come back as fresh
/// constants.
inline std::vector<Tensor> backward(const Tensor& root, std::span<const Tensor> wrt,
                                    bool create_graph = false) {
  if (root.size() != 1)
    throw ShapeError("backward: root must be a scalar, got " + to_string(root.shape()));
  Graph& graph = root.graph();
  const std::size_t mark = graph.size();

  // Only nodes lying on a path from some wrt tensor to the root matter.
  // Everything upstream of the wrt tensors is skipped, which keeps repeated
  // backward passes over a growing unrolled graph linear.
  std::size_t lo = root.id();
  for (const auto& w : wrt)
    if (&w.graph() == &graph) lo = std::min(lo, w.id());
  std::vector<char> relevant(root.id() + 1 - lo, 0);
  for (const auto& w : wrt)
    if (&w.graph() == &graph && w.id() <= root.id()) relevant[w.id() - lo] = 1;
  for (std::size_t id = lo; id <= root.id(); ++id) {
    if (relevant[id - lo]) continue;
    for (auto in : graph.node(id).inputs)
      if (in >= lo && relevant[in - lo]) {
        relevant[id - lo] = 1;
        break;
      }
  }
  auto keep = [&](std::size_t id) { return id >= lo && relevant[id - lo]; };

  std::vector<std::optional<std::size_t>> grad(root.id() + 1);
  grad[root.id()] = graph.constant(Array(root.shape(), 1.0)).id();

  for (std::size_t id = root.id() + 1; id-- > lo;) {
    if (!grad[id] || !relevant[id - lo]) continue;
    const Node& n = graph.node(id);
    if (n.op == Op::leaf || !n.requires_grad) continue;
    const auto inputs = n.inputs;
    auto parts = detail::vjp(graph, id, Tensor(&graph, *grad[id]), keep);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      if (!parts[j]) continue;
      auto& slot = grad[inputs[j]];
      slot = slot ? add(Tensor(&graph, *slot), *parts[j]).id() : parts[j]->id();
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (&w.graph() != &graph) throw DisconnectedError("backward: tensor from another graph");
    if (w.id() > root.id() || !grad[w.id()] || !w.requires_grad())
      throw DisconnectedError("backward: node " + std::to_string(w.id()) +
                              " is not reachable from the root");
    result.emplace_back(&graph, *grad[w.id()]);
  }
  if (create_graph) return result;

  std::vector<Array> values;
  values.reserve(result.size());
  for (const auto& t : result) values.push_back(t.value());
  graph.rewind(mark);
  result.clear();
  for (auto& v : values) result.push_back(graph.constant(std::move(v)));
  return result;
}

inline std::vector<Tensor> backward(const Tensor& root, std::initializer_list<Tensor> wrt,
                                    bool create_graph = false) {
  return backward(root, std::span<const Tensor>(wrt.begin(), wrt.size()), create_graph);
}

}  // namespace petridish
