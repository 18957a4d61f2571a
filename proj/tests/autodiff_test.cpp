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

#include "petridish/autodiff.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <string>

#include "test_util.hpp"

namespace petridish {
namespace {

using testing::numeric_gradient;
using testing::random_array;
using testing::relative_error;

TEST(Autodiff, AddIsComponentwise) {
  Graph g;
  auto a = g.constant(Array({2}, {1, 2}));
  auto b = g.constant(Array({2}, {3, 4}));
  EXPECT_EQ(add(a, b).value().data, (std::vector<double>{4, 6}));
}

TEST(Autodiff, MatmulIdentity) {
  Graph g;
  auto eye = g.constant(Array({2, 2}, {1, 0, 0, 1}));
  auto m = g.constant(Array({2, 2}, {5, 6, 7, 8}));
  EXPECT_EQ(matmul(eye, m).value().data, (std::vector<double>{5, 6, 7, 8}));
}

TEST(Autodiff, SigmoidSlopeValue) {
  Graph g;
  auto x = g.constant(Array::scalar(1.0));
  // 1 / (1 + e^-0.23)
  EXPECT_NEAR(sigmoid_slope(x, 0.23).item(), 0.55724, 1e-5);
}

TEST(Autodiff, ShapeMismatchIsAnError) {
  Graph g;
  auto a = g.constant(Array({2}, {1, 2}));
  auto b = g.constant(Array({3}, {1, 2, 3}));
  EXPECT_THROW(add(a, b), ShapeError);
  auto m = g.constant(Array({2, 3}));
  EXPECT_THROW(matmul(m, m), ShapeError);
  try {
    add(a, b);
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(2)"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("(3)"), std::string::npos);
  }
}

TEST(Autodiff, ScalarBroadcastOnly) {
  Graph g;
  auto a = g.constant(Array({3}, {1, 2, 3}));
  auto s = g.constant(Array::scalar(2.0));
  EXPECT_EQ(mul(a, s).value().data, (std::vector<double>{2, 4, 6}));
  auto row = g.constant(Array({1, 3}, {1, 1, 1}));
  auto mat = g.constant(Array({2, 3}));
  EXPECT_THROW(add(mat, row), ShapeError);
}

TEST(Autodiff, GradientOfSumOfSquares) {
  Graph g;
  auto x = g.variable(Array({3}, {1, 2, 3}));
  auto grads = backward(sum(square(x)), {x}, false);
  EXPECT_EQ(grads[0].value().data, (std::vector<double>{2, 4, 6}));
}

TEST(Autodiff, SecondDerivativeOfCube) {
  Graph g;
  auto x = g.variable(Array::scalar(2.0));
  auto y = mul(mul(x, x), x);
  auto first = backward(y, {x}, true);
  EXPECT_DOUBLE_EQ(first[0].item(), 12.0);
  auto second = backward(first[0], {x}, false);
  EXPECT_DOUBLE_EQ(second[0].item(), 12.0);
}

TEST(Autodiff, NonScalarRootRejected) {
  Graph g;
  auto x = g.variable(Array({2}, {1, 2}));
  EXPECT_THROW(backward(square(x), {x}, false), ShapeError);
}

TEST(Autodiff, UnreachableTensorIsDisconnected) {
  Graph g;
  auto x = g.variable(Array({2}, {1, 2}));
  auto other = g.variable(Array({2}, {1, 2}));
  auto frozen = g.constant(Array({2}, {1, 2}));
  auto root = sum(mul(x, frozen));
  EXPECT_THROW(backward(root, {other}, false), DisconnectedError);
  EXPECT_THROW(backward(root, {frozen}, false), DisconnectedError);
}

TEST(Autodiff, BackwardWithoutCreateGraphLeavesNoTrace) {
  Graph g;
  auto x = g.variable(Array({3}, {1, 2, 3}));
  auto root = sum(square(x));
  const auto before = g.size();
  auto grads = backward(root, {x}, false);
  EXPECT_EQ(g.size(), before + 1);
  EXPECT_FALSE(grads[0].requires_grad());
}

// One case per op: f(x) = sum(w * op(x, ...)) with random w.
struct OpCase {
  std::string name;
  Shape shape;
  double lo, hi;
  std::function<Tensor(Graph&, const Tensor&, std::mt19937_64&)> build;
};

std::vector<OpCase> op_cases() {
  auto other = [](Graph& g, const Shape& s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    return g.variable(random_array(s, rng, lo, hi));
  };
  return {
      {"add", {2, 3}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return add(x, other(g, x.shape(), r)); }},
      {"sub", {2, 3}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return sub(other(g, x.shape(), r), x); }},
      {"mul", {2, 3}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return mul(x, other(g, x.shape(), r)); }},
      {"mul_scalar", {1}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return mul(other(g, {4}, r), x); }},
      {"div_num", {2, 3}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return div(x, other(g, x.shape(), r, 1, 2)); }},
      {"div_den", {2, 3}, 1, 2, [&](Graph& g, const Tensor& x, auto& r) { return div(other(g, x.shape(), r), x); }},
      {"scale", {4}, -1, 1, [](Graph&, const Tensor& x, auto&) { return scale(x, -2.5); }},
      {"shift", {4}, -1, 1, [](Graph&, const Tensor& x, auto&) { return shift(x, 0.7); }},
      {"matmul_a", {2, 3}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return matmul(x, other(g, {3, 4}, r)); }},
      {"matmul_b", {3, 4}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return matmul(other(g, {2, 3}, r), x); }},
      {"matmul_ta", {3, 2}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return matmul(x, other(g, {3, 4}, r), true, false); }},
      {"matmul_tb", {4, 3}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return matmul(other(g, {2, 3}, r), x, false, true); }},
      {"matmul_tt", {3, 2}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return matmul(x, other(g, {4, 3}, r), true, true); }},
      {"bmm", {2, 3, 2}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) { return matmul(x, other(g, {2, 2, 4}, r)); }},
      {"sigmoid_slope", {5}, -2, 2, [](Graph&, const Tensor& x, auto&) { return sigmoid_slope(x, 0.23); }},
      {"tanh", {5}, -2, 2, [](Graph&, const Tensor& x, auto&) { return tanh(x); }},
      {"relu", {5}, 0.1, 2, [](Graph&, const Tensor& x, auto&) { return relu(x); }},
      {"identity", {5}, -2, 2, [](Graph&, const Tensor& x, auto&) { return identity(x); }},
      {"softplus", {5}, -3, 3, [](Graph&, const Tensor& x, auto&) { return softplus(x); }},
      {"block_activation", {3, 2, 2}, -2, 2, [](Graph&, const Tensor& x, auto&) {
         return activation(x, {{Activation::tanh, 1}, {Activation::sigmoid, 1.7}, {Activation::identity, 1}});
       }},
      {"exp", {4}, -1, 1, [](Graph&, const Tensor& x, auto&) { return exp(x); }},
      {"log", {4}, 0.5, 2, [](Graph&, const Tensor& x, auto&) { return log(x); }},
      {"sqrt", {4}, 0.5, 2, [](Graph&, const Tensor& x, auto&) { return sqrt(x); }},
      {"square", {4}, -1, 1, [](Graph&, const Tensor& x, auto&) { return square(x); }},
      {"sum", {2, 3}, -1, 1, [](Graph&, const Tensor& x, auto&) { return sum(x); }},
      {"mean", {2, 3}, -1, 1, [](Graph&, const Tensor& x, auto&) { return mean(x); }},
      {"sum_axis", {2, 3, 2}, -1, 1, [](Graph&, const Tensor& x, auto&) { return sum_axis(x, 1); }},
      {"expand", {2, 1, 3}, -1, 1, [](Graph&, const Tensor& x, auto&) { return expand(x, 1, 4); }},
      {"broadcast", {1}, -1, 1, [](Graph&, const Tensor& x, auto&) { return broadcast(x, {2, 3}); }},
      {"reshape", {2, 3}, -1, 1, [](Graph&, const Tensor& x, auto&) { return reshape(x, {3, 2}); }},
      {"concat", {2, 3}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) {
         const Tensor parts[] = {other(g, {2, 2}, r), x};
         return concat(parts, 1);
       }},
      {"slice", {4, 3}, -1, 1, [](Graph&, const Tensor& x, auto&) { return slice(x, 0, 1, 2); }},
      {"pad", {2, 3}, -1, 1, [](Graph&, const Tensor& x, auto&) { return pad(x, 1, 1, 5); }},
      {"block_mix", {3, 2, 2}, -1, 1, [&](Graph& g, const Tensor& x, auto& r) {
         const Tensor parts[] = {x, other(g, {3, 2, 2}, r)};
         return block_mix(parts, {1, 0, 0.5, 0.5, 0, 1});
       }},
      {"softmax", {3, 4}, -2, 2, [](Graph&, const Tensor& x, auto&) { return softmax(x); }},
      {"log_softmax", {3, 4}, -2, 2, [](Graph&, const Tensor& x, auto&) { return log_softmax(x); }},
  };
}

Tensor weighted_sum(Graph& g, const Tensor& y, std::mt19937_64& rng) {
  return sum(mul(y, g.constant(random_array(y.shape(), rng))));
}

TEST(Autodiff, EveryOpMatchesFiniteDifferences) {
  for (const auto& c : op_cases()) {
    std::mt19937_64 rng(7);
    Graph g;
    auto x = g.variable(random_array(c.shape, rng, c.lo, c.hi));
    auto root = weighted_sum(g, c.build(g, x, rng), rng);
    auto analytic = backward(root, {x}, false)[0].value().data;
    auto numeric = numeric_gradient(root, x);
    EXPECT_LE(relative_error(analytic, numeric), 1e-6) << c.name;
  }
}

TEST(Autodiff, EveryOpDoubleBackwardMatchesFiniteDifferences) {
  // h(x) = sum(v * grad f(x)); compare dh/dx against differences of h.
  for (const auto& c : op_cases()) {
    std::mt19937_64 rng(11);
    Graph g;
    auto x = g.variable(random_array(c.shape, rng, c.lo, c.hi));
    // Square the op output so linear ops still have a nonzero Hessian.
    auto root = weighted_sum(g, square(shift(c.build(g, x, rng), 0.3)), rng);
    auto first = backward(root, {x}, true)[0];
    auto h = weighted_sum(g, first, rng);
    auto analytic = backward(h, {x}, false)[0].value().data;
    auto numeric = numeric_gradient(h, x);
    EXPECT_LE(relative_error(analytic, numeric), 1e-4) << c.name;
  }
}

TEST(Autodiff, UnrolledTrainingLoopMatchesFiniteDifferences) {
  // Three SGD steps of a one-layer model on data X; differentiate the final
  // loss with respect to X through the updates.
  std::mt19937_64 rng(3);
  Graph g;
  auto X = g.variable(random_array({4, 3}, rng));
  auto Y = g.constant(random_array({4, 2}, rng, 0.1, 0.9));
  auto W = g.variable(random_array({3, 2}, rng));
  Tensor w = W;
  for (int step = 0; step < 3; ++step) {
    auto pred = sigmoid_slope(matmul(X, w), 0.7);
    auto loss = mean(square(sub(pred, Y)));
    auto grad = backward(loss, {w}, true)[0];
    w = sub(w, scale(grad, 0.5));
  }
  auto final_loss = mean(square(sub(tanh(matmul(X, w)), Y)));
  auto analytic = backward(final_loss, {X}, false)[0].value().data;
  EXPECT_LE(relative_error(analytic, numeric_gradient(final_loss, X)), 1e-6);
}

TEST(Autodiff, ReplayIsBitIdentical) {
  std::mt19937_64 rng(5);
  Graph g;
  auto x = g.variable(random_array({3, 4}, rng));
  auto w = g.variable(random_array({4, 2}, rng));
  auto y = log_softmax(tanh(matmul(x, w)));
  auto root = sum(y);
  auto grads = backward(root, {x, w}, true);
  auto again = g.replay({});
  for (std::size_t id = 0; id < g.size(); ++id)
    EXPECT_EQ(again.node(id).value, g.node(id).value) << "node " << id;
}

TEST(Autodiff, ConstantsNeverRequireGrad) {
  Graph g;
  auto c = g.constant(Array({2}, {1, 2}));
  EXPECT_FALSE(tanh(scale(c, 2.0)).requires_grad());
}

}  // namespace
}  // namespace petridish
