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


// JSON forms of arrays and optimizer state. Doubles go through the JSON
// library's shortest round-trip formatting, so reloads are bit-exact.

#pragma once

#include <json.hpp>

#include <vector>

#include "petridish/autodiff.hpp"
#include "petridish/error.hpp"
#include "petridish/nn.hpp"

namespace petridish {

namespace detail {
inline nlohmann::json nest(const Array& a, std::size_t dim, std::size_t& pos) {
  auto j = nlohmann::json::array();
  for (std::size_t i = 0; i < a.shape[dim]; ++i) {
    if (dim + 1 == a.rank()) j.push_back(a.data[pos++]);
    else j.push_back(nest(a, dim + 1, pos));
  }
  return j;
}
inline void unnest(const nlohmann::json& j, std::size_t dim, Shape& shape, std::vector<double>& out) {
  if (!j.is_array() || j.empty()) throw Error("tensor JSON must be a non-empty nested array");
  if (shape.size() <= dim) shape.push_back(j.size());
  else if (shape[dim] != j.size()) throw ShapeError("ragged tensor JSON");
  for (const auto& e : j) {
    if (e.is_array()) unnest(e, dim + 1, shape, out);
    else if (e.is_number()) {
      if (dim + 1 != shape.size()) throw ShapeError("ragged tensor JSON");
      out.push_back(e.get<double>());
    } else throw Error("tensor JSON holds a non-number");
  }
}
}  // namespace detail

/// Nested JSON arrays mirroring the array's shape.
inline nlohmann::json array_to_json(const Array& a) {
  std::size_t pos = 0;
  return detail::nest(a, 0, pos);
}

inline Array array_from_json(const nlohmann::json& j) {
  Shape shape;
  std::vector<double> data;
  detail::unnest(j, 0, shape, data);
  return Array(shape, std::move(data));
}

inline nlohmann::json optimizer_to_json(const OptimizerState& s) {
  nlohmann::json m = nlohmann::json::array(), v = nlohmann::json::array();
  for (const auto& a : s.m) m.push_back(array_to_json(a));
  for (const auto& a : s.v) v.push_back(array_to_json(a));
  return {{"kind", to_string(s.config.kind)},
          {"learning_rate", s.config.learning_rate},
          {"l2_penalty", s.config.l2_penalty},
          {"beta1", s.config.beta1},
          {"beta2", s.config.beta2},
          {"epsilon", s.config.epsilon},
          {"step", s.step},
          {"m", m},
          {"v", v}};
}

inline OptimizerState optimizer_from_json(const nlohmann::json& j) {
  OptimizerState s;
  s.config.kind = parse_optimizer(j.at("kind").get<std::string>());
  s.config.learning_rate = j.at("learning_rate").get<double>();
  s.config.l2_penalty = j.at("l2_penalty").get<double>();
  s.config.beta1 = j.at("beta1").get<double>();
  s.config.beta2 = j.at("beta2").get<double>();
  s.config.epsilon = j.at("epsilon").get<double>();
  s.step = j.at("step").get<std::size_t>();
  for (const auto& a : j.at("m")) s.m.push_back(array_from_json(a));
  for (const auto& a : j.at("v")) s.v.push_back(array_from_json(a));
  if (s.m.size() != s.v.size()) throw ShapeError("optimizer moments do not align");
  return s;
}

}  // namespace petridish
