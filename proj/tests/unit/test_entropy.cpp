// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "qvdit/entropy.hpp"
#include "qvdit/errors.hpp"
#include "qvdit/rng.hpp"

namespace qvdit {
namespace {

TEST(Entropy, TwoEquallyLikelyValuesIsOneBit) {
  EXPECT_DOUBLE_EQ(empirical_entropy(std::vector<double>{1, 1, 2, 2}), 1.0);
}

TEST(Entropy, HandComputedSkewed) {
  const double h = empirical_entropy(std::vector<double>{7, 7, 7, 3});
  EXPECT_NEAR(h, -(0.75 * std::log2(0.75) + 0.25 * std::log2(0.25)), 1e-15);
}

TEST(Entropy, ConstantIsZeroAndPositiveZero) {
  const double h = empirical_entropy(std::vector<double>{4.5, 4.5, 4.5});
  EXPECT_EQ(h, 0.0);
  EXPECT_FALSE(std::signbit(h));
}

TEST(Entropy, NegativeZeroFoldsIntoZero) {
  const EmpiricalDistribution d = empirical_distribution(std::vector<double>{-0.0, 0.0, 1.0, -0.0});
  ASSERT_EQ(d.support.size(), 2u);
  EXPECT_FALSE(std::signbit(d.support[0]));
  EXPECT_DOUBLE_EQ(d.probs[0], 0.75);
}

TEST(Entropy, DistinctValuesGiveLogN) {
  std::vector<double> v(64);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) * 0.37;
  EXPECT_NEAR(empirical_entropy(v), 6.0, 1e-12);
}

TEST(Entropy, EmptyInputThrows) {
  EXPECT_THROW(empirical_entropy(std::vector<double>{}), ShapeError);
}

TEST(Entropy, ErrorNeverExceedsWeightUnderSharedParameters) {
  Rng rng(17);
  for (int seed = 0; seed < 50; ++seed) {
    for (int bits : {2, 3, 4, 8}) {
      const Tensor w = normal_tensor(rng, {16, 16}, 1.0);
      const EntropyCheck c = verify_entropy_theorem(w, QuantSpec{bits, Granularity::per_tensor, false});
      EXPECT_TRUE(c.holds) << c.h_error << " > " << c.h_weight;
    }
  }
}

TEST(Entropy, RepeatedValuesCollapseUnderQuantization) {
  // Few distinct weights: the error takes at most as many values.
  const Tensor w = Tensor::from_rows({{0.1, 0.1, 0.9}, {0.9, 0.5, 0.5}});
  const EntropyCheck c = verify_entropy_theorem(w, QuantSpec{2, Granularity::per_tensor, false});
  EXPECT_TRUE(c.holds);
  EXPECT_LE(c.h_error, c.h_weight);
}

TEST(Entropy, RowWiseScalesCanSplitARepeatedValue) {
  // 1.0 appears in both rows but the rows have different grids, so the
  // error takes two values where the weight had one.
  const Tensor w = Tensor::from_rows({{0.0, 1.0, 3.0}, {0.0, 1.0, 2.0}});
  const EntropyCheck c = verify_entropy_theorem(w, QuantSpec{2, Granularity::per_channel, false});
  EXPECT_GT(c.h_error, 0.0);
  EXPECT_DOUBLE_EQ(c.h_weight, empirical_entropy(w));
}

}  // namespace
}  // namespace qvdit
