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


#include "petridish/motif.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <vector>

#include "petridish/error.hpp"

namespace petridish {
namespace {

// Independent legality check: node 0 reads the input, node i reads j < i.
bool legal(const CellEncoding& e) {
  if (e.node(0).predecessor != 0) return false;
  for (std::size_t i = 1; i < CellEncoding::kNodes; ++i)
    if (e.node(i).predecessor >= i) return false;
  return true;
}

TEST(CellEncoding, StringRoundTrip) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const auto e = CellEncoding::random(rng);
    EXPECT_TRUE(legal(e));
    EXPECT_EQ(CellEncoding::from_string(e.to_string()), e);
    EXPECT_EQ(CellEncoding::from_json(e.to_json()), e);
  }
}

TEST(CellEncoding, RejectsForwardReference) {
  auto j = CellEncoding::chain(Activation::tanh).to_json();
  j[5][0] = 5;
  EXPECT_THROW(CellEncoding::from_json(j), InvalidEncoding);
  j[5][0] = 4;
  j[3][1] = "softplus";
  EXPECT_THROW(CellEncoding::from_json(j), InvalidEncoding);
}

TEST(CellEncoding, JsonIsPredecessorActivationPairs) {
  const auto j = CellEncoding::chain(Activation::relu).to_json();
  ASSERT_EQ(j.size(), 12u);
  EXPECT_EQ(j[0][0], 0);
  EXPECT_EQ(j[7][0], 6);
  EXPECT_EQ(j[7][1], "relu");
}

TEST(CellEncoding, LooseEndsOfChainIsLastNode) {
  EXPECT_EQ(CellEncoding::chain(Activation::tanh).loose_ends(), std::vector<std::size_t>{11});
  auto s = CellEncoding::chain(Activation::tanh).to_string();
  // Node 11 reads node 0 instead of node 10: node 10 becomes loose too.
  s[CellEncoding::kPositions - 2] = 0;
  EXPECT_EQ(CellEncoding::from_string(s).loose_ends(), (std::vector<std::size_t>{10, 11}));
}

TEST(Mutate, RateZeroIsIdentity) {
  std::mt19937_64 rng(1);
  const auto e = CellEncoding::random(rng);
  EXPECT_EQ(mutate(e, 0.0, 99), e);
}

TEST(Mutate, RateOneChangesEveryPosition) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const auto e = CellEncoding::random(rng);
    const auto m = mutate(e, 1.0, 1000 + k);
    const auto a = e.to_string(), b = m.to_string();
    for (std::size_t p = 0; p < a.size(); ++p) {
      EXPECT_NE(a[p], b[p]) << "position " << p;
    }
    EXPECT_TRUE(legal(m));
  }
}

TEST(Mutate, ChangedFractionMatchesRate) {
  std::mt19937_64 rng(5);
  const auto e = CellEncoding::random(rng);
  std::size_t changed = 0, total = 0;
  for (std::uint64_t seed = 0; total < 10000; ++seed) {
    const auto a = e.to_string(), b = mutate(e, 0.05, seed).to_string();
    for (std::size_t p = 0; p < a.size(); ++p) changed += a[p] != b[p];
    total += a.size();
  }
  const double frac = double(changed) / double(total);
  EXPECT_GE(frac, 0.04);
  EXPECT_LE(frac, 0.06);
}

TEST(Mutate, RejectsBadRate) {
  EXPECT_THROW(mutate(CellEncoding{}, 1.5, 0), Error);
  EXPECT_THROW(mutate(CellEncoding{}, -0.1, 0), Error);
}

TEST(Crossover, IdenticalParents) {
  std::mt19937_64 rng(7);
  const auto a = CellEncoding::random(rng);
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(crossover(a, a, 1.0, s), a);
}

TEST(Crossover, RateZeroCopiesFirstParent) {
  std::mt19937_64 rng(8);
  const auto a = CellEncoding::random(rng), b = CellEncoding::random(rng);
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(crossover(a, b, 0.0, s), a);
}

TEST(Crossover, EveryCutSplicesAndStaysLegal) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = CellEncoding::random(rng), b = CellEncoding::random(rng);
    const auto sa = a.to_string(), sb = b.to_string();
    for (std::size_t cut = 0; cut <= CellEncoding::kPositions; ++cut) {
      const auto c = crossover_at(a, b, cut);
      EXPECT_TRUE(legal(c));
      const auto sc = c.to_string();
      for (std::size_t p = 0; p < sc.size(); ++p) EXPECT_EQ(sc[p], p < cut ? sa[p] : sb[p]);
    }
  }
  EXPECT_THROW(crossover_at(CellEncoding{}, CellEncoding{}, CellEncoding::kPositions + 1),
               LengthMismatch);
}

TEST(Crossover, RandomCutsAreInterior) {
  std::mt19937_64 rng(10);
  const auto a = CellEncoding::random(rng);
  auto b = mutate(a, 1.0, 4);
  std::set<std::size_t> cuts;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const auto c = crossover(a, b, 1.0, s).to_string();
    const auto sa = a.to_string();
    std::size_t cut = 0;
    while (cut < c.size() && c[cut] == sa[cut]) ++cut;
    cuts.insert(cut);
  }
  // b differs from a at every position, so the first mismatch is the cut.
  EXPECT_EQ(*cuts.begin(), 1u);
  EXPECT_EQ(*cuts.rbegin(), CellEncoding::kPositions - 1);
}

TEST(Motif, SlopeValidation) {
  EXPECT_THROW(Motif::slope(0.0), Error);
  EXPECT_THROW(Motif::slope(-1.0), Error);
  EXPECT_NO_THROW(Motif::slope(0.01));
}

TEST(Motif, JsonRoundTripAndKeys) {
  const auto s = Motif::slope(0.23);
  EXPECT_EQ(Motif::from_json(s.to_json()), s);
  EXPECT_EQ(s.key(), "slope:0.23000000000000001");
  const auto c = Motif::cell(CellEncoding::chain(Activation::sigmoid));
  EXPECT_EQ(Motif::from_json(c.to_json()), c);
  EXPECT_NE(c.key(), Motif::cell(CellEncoding::chain(Activation::tanh)).key());
}

TEST(Motif, HomogeneityCheck) {
  const std::vector<Motif> mixed = {Motif::slope(1.0), Motif::cell(CellEncoding{})};
  EXPECT_THROW(require_homogeneous(mixed), MixedVariants);
  EXPECT_THROW(require_homogeneous({}), MixedVariants);
}

}  // namespace
}  // namespace petridish
