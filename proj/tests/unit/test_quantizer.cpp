// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "qvdit/errors.hpp"
#include "qvdit/quantizer.hpp"
#include "qvdit/rng.hpp"

namespace qvdit {
namespace {

// Brute-force nearest grid point over all 2^N levels.
double nearest_level(double x, const QuantParams& p) {
  double best = dequantize_value(0, p);
  for (std::int64_t q = 1; q <= p.max_code(); ++q) {
    const double v = dequantize_value(q, p);
    if (std::abs(v - x) < std::abs(best - x)) best = v;
  }
  return best;
}

TEST(Quantizer, HandComputedTwoBitRange) {
  const std::vector<double> v{0.0, 1.0, 2.0, 3.0};
  const QuantParams p = compute_params(v, 2);
  EXPECT_DOUBLE_EQ(p.scale, 1.0);
  EXPECT_EQ(p.zero_point, 0);
  for (double x : v) EXPECT_EQ(fake_quant_value(x, p), x);
  EXPECT_EQ(quantize_value(2.0, p), 2);
}

TEST(Quantizer, HandComputedSymmetricThreeBit) {
  const std::vector<double> v{-1.0, 1.0};
  const QuantParams p = compute_params(v, 3);
  EXPECT_DOUBLE_EQ(p.scale, 2.0 / 7.0);
  // -l/s = 3.5 rounds half-to-even to 4.
  EXPECT_EQ(p.zero_point, 4);
  EXPECT_EQ(quantize_value(-1.0, p), 0);
  EXPECT_EQ(quantize_value(1.0, p), 7);
}

TEST(Quantizer, RoundHalfToEven) {
  QuantParams p;
  p.bits = 4;
  p.scale = 1.0;
  p.zero_point = 0;
  EXPECT_EQ(quantize_value(0.5, p), 0);
  EXPECT_EQ(quantize_value(1.5, p), 2);
  EXPECT_EQ(quantize_value(2.5, p), 2);
  EXPECT_EQ(quantize_value(3.5, p), 4);
}

TEST(Quantizer, SaturatesOutsideRange) {
  const QuantParams p = compute_params(std::vector<double>{-1.0, 1.0}, 3);
  EXPECT_EQ(quantize_value(100.0, p), 7);
  EXPECT_EQ(quantize_value(-100.0, p), 0);
  EXPECT_FALSE(in_clip_range(100.0, p));
  EXPECT_TRUE(in_clip_range(0.2, p));
}

TEST(Quantizer, ConstantInputReconstructsExactly) {
  for (int bits = kMinBits; bits <= kMaxBits; ++bits) {
    for (double c : {5.0, -5.0, 0.0, 1e-300, -3.25e7, 0.1}) {
      const std::vector<double> v{c, c, c};
      const QuantParams p = compute_params(v, bits);
      EXPECT_GT(p.scale, 0.0);
      EXPECT_TRUE(std::isfinite(p.scale));
      EXPECT_EQ(fake_quant_value(c, p), c) << "bits " << bits << " c " << c;
    }
  }
}

TEST(Quantizer, FakeQuantIsNearestLevelInsideRange) {
  Rng rng(31);
  for (int bits = kMinBits; bits <= kMaxBits; ++bits) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> v(32);
      for (double& x : v) x = rng.normal(0.0, 3.0);
      const QuantParams p = compute_params(v, bits);
      for (int k = 0; k < 50; ++k) {
        const double x = rng.uniform(p.lower, p.upper);
        if (!in_clip_range(x, p)) continue;
        const double got = fake_quant_value(x, p);
        EXPECT_NEAR(std::abs(got - x), std::abs(nearest_level(x, p) - x), 1e-12 * p.scale);
        EXPECT_LE(std::abs(got - x), 0.5 * p.scale * (1 + 1e-12));
      }
    }
  }
}

TEST(Quantizer, CodesStayInRange) {
  Rng rng(2);
  const Tensor x = normal_tensor(rng, {7, 9}, 1.0);
  for (int bits = kMinBits; bits <= kMaxBits; ++bits) {
    const QuantParams p = compute_params(x.data(), bits);
    for (std::int64_t q : quantize(x, p).codes) {
      EXPECT_GE(q, 0);
      EXPECT_LE(q, p.max_code());
    }
  }
}

TEST(Quantizer, DequantizeRejectsOutOfRangeCode) {
  const QuantParams p = compute_params(std::vector<double>{0.0, 3.0}, 2);
  EXPECT_THROW(dequantize(CodeTensor{{1, 2}, {0, 4}}, p), OutOfRangeCodeError);
  EXPECT_THROW(dequantize(CodeTensor{{1, 1}, {-1}}, p), OutOfRangeCodeError);
  EXPECT_EQ(dequantize(CodeTensor{{1, 2}, {0, 3}}, p), Tensor::from_rows({{0.0, 3.0}}));
}

TEST(Quantizer, RejectsBadBitsAndNonFinite) {
  EXPECT_THROW(compute_params(std::vector<double>{0.0, 1.0}, 1), std::invalid_argument);
  EXPECT_THROW(compute_params(std::vector<double>{0.0, 1.0}, 9), std::invalid_argument);
  EXPECT_THROW(compute_params(std::vector<double>{0.0, std::numeric_limits<double>::quiet_NaN()}, 4),
               NonFiniteError);
}

TEST(Quantizer, PerChannelUsesOneParameterSetPerRow) {
  const Tensor w = Tensor::from_rows({{0.0, 3.0}, {0.0, 30.0}});
  const QuantSpec spec{2, Granularity::per_channel, false};
  const auto params = compute_spec_params(w, spec);
  ASSERT_EQ(params.size(), 2u);
  EXPECT_DOUBLE_EQ(params[0].scale, 1.0);
  EXPECT_DOUBLE_EQ(params[1].scale, 10.0);
  EXPECT_EQ(fake_quant(w, spec), w);
}

TEST(Quantizer, PassthroughIsIdentity) {
  Rng rng(4);
  const Tensor x = normal_tensor(rng, {3, 5}, 1.0);
  EXPECT_EQ(fake_quant(x, QuantSpec::full_precision()), x);
  EXPECT_TRUE(compute_spec_params(x, QuantSpec::full_precision()).empty());
}

TEST(Quantizer, WithScaleKeepsZeroPointAndMovesRange) {
  const QuantParams p = compute_params(std::vector<double>{-1.0, 1.0}, 3);
  const QuantParams q = p.with_scale(0.5);
  EXPECT_EQ(q.zero_point, p.zero_point);
  EXPECT_DOUBLE_EQ(q.lower, -2.0);
  EXPECT_DOUBLE_EQ(q.upper, 1.5);
  EXPECT_DOUBLE_EQ((q.upper - q.lower) / static_cast<double>(q.max_code()), q.scale);
}

TEST(Quantizer, ScaleGradientHandValues) {
  QuantParams p;
  p.bits = 2;
  p.scale = 1.0;
  p.zero_point = 1;
  // Inside: round(x/s) - x/s.
  EXPECT_DOUBLE_EQ(scale_gradient_ste(0.3, p), -0.3);
  EXPECT_DOUBLE_EQ(scale_gradient_ste(1.75, p), 0.25);
  // Above: q_max - z. Below: 0 - z.
  EXPECT_DOUBLE_EQ(scale_gradient_ste(10.0, p), 2.0);
  EXPECT_DOUBLE_EQ(scale_gradient_ste(-10.0, p), -1.0);
}

TEST(Quantizer, ScaleGradientMatchesFiniteDifferenceAwayFromJumps) {
  // With the codes held fixed, fake_quant is linear in s; the STE value is
  // that slope. Probe points sit far from rounding boundaries.
  Rng rng(6);
  QuantParams p;
  p.bits = 4;
  p.scale = 0.1;
  p.zero_point = 8;
  for (int k = 0; k < 100; ++k) {
    const double code = std::floor(rng.uniform(-12.0, 12.0));
    const double x = (code + rng.uniform(-0.3, 0.3)) * p.scale;
    const double h = 1e-9;
    const double fd =
        (fake_quant_value(x, p.with_scale(p.scale + h)) - fake_quant_value(x, p.with_scale(p.scale - h))) / (2 * h);
    // d/ds of (q - z) s is (q - z); the STE adds d(x/s)/ds * s = -x/s.
    const double ste_code_part = scale_gradient_ste(x, p) + (in_clip_range(x, p) ? x / p.scale : 0.0);
    EXPECT_NEAR(fd, ste_code_part, 1e-5);
  }
}

}  // namespace
}  // namespace qvdit
