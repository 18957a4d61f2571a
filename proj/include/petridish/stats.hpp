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


// Small statistics helpers shared by the Petri dish, the baseline and the
// experiment drivers.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "petridish/error.hpp"

namespace petridish {

/// Zero mean, unit population standard deviation.
inline std::vector<double> normalize(std::span<const double> values) {
  if (values.size() < 2) throw DegenerateVariance("normalize needs at least two values");
  long double mean = 0.0L;
  for (double v : values) mean += v;
  mean /= (long double)values.size();
  long double var = 0.0L;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= (long double)values.size();
  if (!(var > 0.0L)) throw DegenerateVariance("all values are equal; nothing to rank");
  const long double sd = std::sqrt(var);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(double((v - mean) / sd));
  return out;
}

/// Rounds to a multiple of 2^-32. Applied to normalized targets so that
/// affinely related inputs, whose z-scores differ only in the last few bits,
/// map to identical values.
inline double snap(double z) {
  constexpr double grid = 4294967296.0;
  return std::nearbyint(z * grid) / grid;
}

inline std::vector<double> normalize_snapped(std::span<const double> values) {
  auto z = normalize(values);
  for (auto& v : z) v = snap(v);
  return z;
}

/// 1-based ranks; tied values share the average of their ranks.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("pearson needs two equal series of length >= 2");
  const double n = double(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Spearman rank correlation (Pearson on average ranks). Zero when either
/// series is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a), rb = average_ranks(b);
  return pearson(ra, rb);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw Error("mean of an empty list");
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

}  // namespace petridish
