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


#include "petridish/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace petridish {
namespace {

TEST(Normalize, TwoPoints) {
  const std::vector<double> v = {0, 2};
  EXPECT_EQ(normalize(v), (std::vector<double>{-1, 1}));
}

TEST(Normalize, ThreePoints) {
  const std::vector<double> v = {1, 2, 3};
  const auto z = normalize(v);
  const double s = std::sqrt(1.5);  // (1, 0, 1) / sqrt(2/3)
  EXPECT_NEAR(z[0], -s, 1e-15);
  EXPECT_NEAR(z[1], 0.0, 1e-15);
  EXPECT_NEAR(z[2], s, 1e-15);
  EXPECT_NEAR(z[2], 1.22474, 1e-5);
}

TEST(Normalize, AffineInvariance) {
  const std::vector<double> v = {0.91, 0.87, 0.95, 0.62, 0.93};
  std::vector<double> w;
  for (double x : v) w.push_back(37.5 * x - 12.25);
  const auto a = normalize(v), b = normalize(w);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
  EXPECT_EQ(normalize_snapped(v), normalize_snapped(w));
}

TEST(Normalize, Degenerate) {
  const std::vector<double> same = {0.4, 0.4, 0.4};
  EXPECT_THROW(normalize(same), DegenerateVariance);
  const std::vector<double> one = {1.0};
  EXPECT_THROW(normalize(one), DegenerateVariance);
}

TEST(Spearman, MonotoneAndReversed) {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const std::vector<double> b = {10, 20, 25, 100, 1000};
  const std::vector<double> c = {5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(a, b), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, c), -1.0);
}

TEST(Spearman, AverageRanksForTies) {
  const std::vector<double> v = {3, 1, 2, 2};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{4, 1, 2.5, 2.5}));
  // Hand-computed: ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4) gives
  // cov = 4.5, var = 4.5 and 5, so rho = 4.5 / sqrt(22.5).
  const std::vector<double> a = {1, 2, 2, 3}, b = {1, 2, 3, 4};
  EXPECT_NEAR(spearman(a, b), 4.5 / std::sqrt(22.5), 1e-15);
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), Error);
}

}  // namespace
}  // namespace petridish
