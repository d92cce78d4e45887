// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// Empirical check that the weight quantization error carries no more Shannon
// entropy than the weight itself. Entropy is taken over the exact-value
// empirical distribution, so the check is about discrete outcome collapse.
// Under one shared parameter set the error is a function of the weight value
// and outcomes can only merge. Row-wise granularities can split a value that
// repeats across rows with different scales; verify_entropy_theorem reports
// such a case as `holds == false` instead of assuming it away.
#pragma once

#include <span>
#include <vector>

#include "qvdit/quantizer.hpp"
#include "qvdit/tensor.hpp"

namespace qvdit {

inline constexpr double kEntropyTolerance = 1e-9;

struct EmpiricalDistribution {
  std::vector<double> support;  // strictly increasing
  std::vector<double> probs;    // relative frequencies, sum to 1
};

/// -0.0 is folded into +0.0; every other value is its own outcome.
EmpiricalDistribution empirical_distribution(std::span<const double> values);

/// Shannon entropy in bits.
double empirical_entropy(std::span<const double> values);
double empirical_entropy(const Tensor& x);

struct EntropyCheck {
  double h_weight = 0.0;
  double h_error = 0.0;
  bool holds = false;
};

EntropyCheck verify_entropy_theorem(const Tensor& w, const QuantSpec& spec);

}  // namespace qvdit
