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


#include <gtest/gtest.h>

#include <cmath>

#include "petridish/baseline.hpp"

namespace petridish {
namespace {

TEST(Baseline, FitsAConstant) {
  std::vector<double> xs, ys;
  for (int i = 0; i < 20; ++i) {
    xs.push_back(0.1 * i);
    ys.push_back(0.3);
  }
  BaselineHyper h;
  h.steps = 600;
  h.lr = 0.05;
  h.l2 = 0.0;
  const auto m = baseline_train(xs, ys, h, 2);
  double mse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) mse += std::pow(baseline_predict(m, xs[i]) - ys[i], 2);
  EXPECT_LT(mse / double(xs.size()), 1e-3);
}

TEST(Baseline, FitsALine) {
  std::vector<double> xs, ys;
  for (int i = 0; i < 15; ++i) {
    xs.push_back(-1.0 + 2.0 * i / 14.0);
    ys.push_back(0.5 * xs.back() - 0.2);
  }
  BaselineHyper h;
  h.steps = 1500;
  h.lr = 0.05;
  h.decay_steps = 500;
  h.l2 = 0.0;
  const auto m = baseline_train(xs, ys, h, 3);
  const auto pred = baseline_predict(m, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(pred[i], ys[i], 0.05);
}

TEST(Baseline, Deterministic) {
  const std::vector<double> xs = {0.1, 0.5, 0.9, 1.3}, ys = {1, 0, 1, 0};
  BaselineHyper h;
  h.batch = 2;
  const auto a = baseline_train(xs, ys, h, 8), b = baseline_train(xs, ys, h, 8);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_NE(baseline_train(xs, ys, h, 9).loss_history, a.loss_history);
}

TEST(Baseline, LearningRateDecaysInSteps) {
  // With decay 0.5 every step, later steps barely move the loss.
  const std::vector<double> xs = {0.0, 1.0}, ys = {0.0, 1.0};
  BaselineHyper h;
  h.lr_decay = 0.5;
  h.decay_steps = 1;
  h.steps = 80;
  const auto m = baseline_train(xs, ys, h, 0);
  EXPECT_NEAR(m.loss_history[78], m.loss_history[79], 1e-12);
}

TEST(Baseline, RejectsBadInput) {
  const std::vector<double> one = {1.0}, two = {1.0, 2.0}, three = {1, 2, 3};
  EXPECT_THROW(baseline_train(one, one, {}, 0), Error);
  EXPECT_THROW(baseline_train(two, three, {}, 0), ShapeError);
  BaselineHyper h;
  h.lr = 0.0;
  EXPECT_THROW(baseline_train(two, two, h, 0), ConfigError);
}

}  // namespace
}  // namespace petridish
