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

// Motifs: the searchable units. Either a sigmoid slope or a recurrent cell
// given as 12 (predecessor, activation) pairs.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "petridish/autodiff.hpp"
#include "petridish/error.hpp"

namespace petridish {

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softplus: return "softplus";
  }
  return "?";
}

/// Activations available inside a cell, in string-encoding order.
inline constexpr std::array<Activation, 4> kCellActivations = {
    Activation::tanh, Activation::relu, Activation::sigmoid, Activation::identity};

inline Activation parse_cell_activation(const std::string& name) {
  for (auto a : kCellActivations)
    if (name == activation_name(a)) return a;
  throw InvalidEncoding("unknown cell activation '" + name + "'");
}

inline std::size_t cell_activation_index(Activation a) {
  for (std::size_t i = 0; i < kCellActivations.size(); ++i)
    if (kCellActivations[i] == a) return i;
  throw InvalidEncoding(std::string("activation '") + activation_name(a) + "' not allowed in a cell");
}

struct CellNode {
  std::size_t predecessor = 0;
  Activation activation = Activation::tanh;
  friend bool operator==(const CellNode&, const CellNode&) = default;
};

/// Recurrent cell wiring. Node 0 reads the cell input and previous state;
/// node i > 0 reads node `predecessor` < i. Nodes never read by another node
/// are averaged into the new state.
///
/// As a GA string, the encoding has one position per free choice: the
/// activation of every node and the predecessor of nodes 2..11 (nodes 0 and 1
/// have a single legal predecessor). Legality of a position depends only on
/// its index, so any splice of two valid strings is valid.
class CellEncoding {
 public:
  static constexpr std::size_t kNodes = 12;
  static constexpr std::size_t kPositions = kNodes + (kNodes - 2);

  CellEncoding() {
    for (std::size_t i = 0; i < kNodes; ++i) nodes_[i] = {i == 0 ? 0 : i - 1, Activation::tanh};
  }
  explicit CellEncoding(const std::array<CellNode, kNodes>& nodes) : nodes_(nodes) { validate(); }

  /// Every node uses `act`; node i reads node i-1.
  static CellEncoding chain(Activation act) {
    std::array<CellNode, kNodes> n{};
    for (std::size_t i = 0; i < kNodes; ++i) n[i] = {i == 0 ? 0 : i - 1, act};
    return CellEncoding(n);
  }

  template <class Rng>
  static CellEncoding random(Rng& rng) {
    std::vector<std::size_t> s(kPositions);
    for (std::size_t p = 0; p < kPositions; ++p)
      s[p] = std::uniform_int_distribution<std::size_t>(0, domain_size(p) - 1)(rng);
    return from_string(s);
  }

  const std::array<CellNode, kNodes>& nodes() const { return nodes_; }
  const CellNode& node(std::size_t i) const { return nodes_.at(i); }

  void validate() const {
    if (nodes_[0].predecessor != 0) throw InvalidEncoding("node 0 must read the cell input (0)");
    for (std::size_t i = 0; i < kNodes; ++i) {
      if (i > 0 && nodes_[i].predecessor >= i)
        throw InvalidEncoding("node " + std::to_string(i) + " reads node " +
                              std::to_string(nodes_[i].predecessor) + " which does not precede it");
      cell_activation_index(nodes_[i].activation);
    }
  }

  /// Nodes that no other node reads, ascending.
  std::vector<std::size_t> loose_ends() const {
    std::array<bool, kNodes> used{};
    for (std::size_t i = 1; i < kNodes; ++i) used[nodes_[i].predecessor] = true;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < kNodes; ++i)
      if (!used[i]) out.push_back(i);
    return out;
  }

  /// Number of legal values at string position p.
  static std::size_t domain_size(std::size_t p) {
    const auto [node, is_pred] = position(p);
    return is_pred ? node : kCellActivations.size();
  }

  /// (node, is_predecessor) for string position p.
  static std::pair<std::size_t, bool> position(std::size_t p) {
    if (p >= kPositions) throw InvalidEncoding("string position out of range");
    if (p < 2) return {p, false};
    const std::size_t q = p - 2;
    return {2 + q / 2, q % 2 == 0};
  }

  std::vector<std::size_t> to_string() const {
    std::vector<std::size_t> s(kPositions);
    for (std::size_t p = 0; p < kPositions; ++p) {
      const auto [node, is_pred] = position(p);
      s[p] = is_pred ? nodes_[node].predecessor : cell_activation_index(nodes_[node].activation);
    }
    return s;
  }

  static CellEncoding from_string(const std::vector<std::size_t>& s) {
    if (s.size() != kPositions)
      throw InvalidEncoding("encoding string must have " + std::to_string(kPositions) + " positions");
    std::array<CellNode, kNodes> n{};
    for (std::size_t i = 0; i < kNodes; ++i) n[i].predecessor = i == 0 ? 0 : i - 1;
    for (std::size_t p = 0; p < kPositions; ++p) {
      if (s[p] >= domain_size(p))
        throw InvalidEncoding("value " + std::to_string(s[p]) + " illegal at position " +
                              std::to_string(p));
      const auto [node, is_pred] = position(p);
      if (is_pred) n[node].predecessor = s[p];
      else n[node].activation = kCellActivations[s[p]];
    }
    return CellEncoding(n);
  }

  /// JSON array of [predecessor, activation-name] pairs.
  nlohmann::json to_json() const {
    auto j = nlohmann::json::array();
    for (const auto& n : nodes_) j.push_back({n.predecessor, activation_name(n.activation)});
    return j;
  }

  static CellEncoding from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != kNodes)
      throw InvalidEncoding("cell encoding must be an array of " + std::to_string(kNodes) + " pairs");
    std::array<CellNode, kNodes> n{};
    for (std::size_t i = 0; i < kNodes; ++i) {
      const auto& e = j[i];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_string())
        throw InvalidEncoding("cell node " + std::to_string(i) + " is not [int, name]");
      const auto pred = e[0].get<long long>();
      if (pred < 0) throw InvalidEncoding("negative predecessor");
      n[i] = {std::size_t(pred), parse_cell_activation(e[1].get<std::string>())};
    }
    return CellEncoding(n);
  }

  friend bool operator==(const CellEncoding&, const CellEncoding&) = default;

 private:
  std::array<CellNode, kNodes> nodes_{};
};

/// Resamples every string position with probability `rate`, uniformly over its
/// legal values excluding the current one.
inline CellEncoding mutate(const CellEncoding& enc, double rate, std::uint64_t rng_seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error("mutation rate must lie in [0, 1]");
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto s = enc.to_string();
  for (std::size_t p = 0; p < s.size(); ++p) {
    if (!(coin(rng) < rate)) continue;
    const std::size_t k = CellEncoding::domain_size(p);
    const std::size_t r = std::uniform_int_distribution<std::size_t>(0, k - 2)(rng);
    s[p] = r >= s[p] ? r + 1 : r;
  }
  return CellEncoding::from_string(s);
}

/// Single-point crossover: positions [0, cut) from a, [cut, end) from b.
inline CellEncoding crossover_at(const CellEncoding& a, const CellEncoding& b, std::size_t cut) {
  if (cut > CellEncoding::kPositions) throw LengthMismatch("crossover cut beyond string length");
  auto sa = a.to_string();
  const auto sb = b.to_string();
  std::copy(sb.begin() + std::ptrdiff_t(cut), sb.end(), sa.begin() + std::ptrdiff_t(cut));
  return CellEncoding::from_string(sa);
}

/// With probability `rate` splices a and b at a uniformly random interior
/// cut; otherwise returns a copy of a.
inline CellEncoding crossover(const CellEncoding& a, const CellEncoding& b, double rate,
                              std::uint64_t rng_seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error("crossover rate must lie in [0, 1]");
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (!(coin(rng) < rate)) return a;
  const std::size_t cut =
      std::uniform_int_distribution<std::size_t>(1, CellEncoding::kPositions - 1)(rng);
  return crossover_at(a, b, cut);
}

/// A searchable architectural unit.
class Motif {
 public:
  struct Slope {
    double c;
    friend bool operator==(const Slope&, const Slope&) = default;
  };

  static Motif slope(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw Error("sigmoid slope must be positive and finite");
    return Motif(Slope{c});
  }
  static Motif cell(CellEncoding enc) {
    enc.validate();
    return Motif(std::move(enc));
  }

  bool is_slope() const { return std::holds_alternative<Slope>(v_); }
  bool is_cell() const { return std::holds_alternative<CellEncoding>(v_); }
  double slope_value() const { return std::get<Slope>(v_).c; }
  const CellEncoding& encoding() const { return std::get<CellEncoding>(v_); }

  /// Canonical text used for cache keys, deduplication and tie-breaking.
  std::string key() const {
    if (is_slope()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "slope:%.17g", slope_value());
      return buf;
    }
    return "cell:" + encoding().to_json().dump();
  }

  nlohmann::json to_json() const {
    if (is_slope()) return {{"slope", slope_value()}};
    return {{"cell", encoding().to_json()}};
  }
  static Motif from_json(const nlohmann::json& j) {
    if (j.contains("slope")) return slope(j.at("slope").get<double>());
    if (j.contains("cell")) return cell(CellEncoding::from_json(j.at("cell")));
    throw InvalidEncoding("motif JSON needs a 'slope' or 'cell' member");
  }

  friend bool operator==(const Motif&, const Motif&) = default;

 private:
  explicit Motif(Slope s) : v_(s) {}
  explicit Motif(CellEncoding e) : v_(std::move(e)) {}
  std::variant<Slope, CellEncoding> v_;
};

/// Throws MixedVariants unless the list is nonempty and homogeneous.
inline void require_homogeneous(std::span<const Motif> motifs) {
  if (motifs.empty()) throw MixedVariants("motif list is empty");
  for (const auto& m : motifs)
    if (m.is_slope() != motifs.front().is_slope())
      throw MixedVariants("motif list mixes slope and cell motifs");
}

}  // namespace petridish
