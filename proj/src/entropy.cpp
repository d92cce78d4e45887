// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/entropy.hpp"

#include <algorithm>
#include <cmath>

#include "qvdit/errors.hpp"

namespace qvdit {

EmpiricalDistribution empirical_distribution(std::span<const double> values) {
  if (values.empty()) throw ShapeError("empirical_distribution: empty input");
  check_finite(values, "empirical_distribution");
  std::vector<double> sorted(values.begin(), values.end());
  for (double& v : sorted) {
    if (v == 0.0) v = 0.0;
  }
  std::sort(sorted.begin(), sorted.end());

  EmpiricalDistribution dist;
  const auto total = static_cast<double>(sorted.size());
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    dist.support.push_back(sorted[i]);
    dist.probs.push_back(static_cast<double>(j - i) / total);
    i = j;
  }
  return dist;
}

double empirical_entropy(std::span<const double> values) {
  const EmpiricalDistribution dist = empirical_distribution(values);
  double h = 0.0;
  for (double p : dist.probs) h -= p * std::log2(p);
  // A single outcome gives -1 * log2(1) = -0.0.
  return h == 0.0 ? 0.0 : h;
}

double empirical_entropy(const Tensor& x) { return empirical_entropy(x.data()); }

EntropyCheck verify_entropy_theorem(const Tensor& w, const QuantSpec& spec) {
  EntropyCheck check;
  check.h_weight = empirical_entropy(w);
  check.h_error = empirical_entropy(quant_error(w, spec));
  check.holds = check.h_error <= check.h_weight + kEntropyTolerance;
  return check;
}

}  // namespace qvdit
