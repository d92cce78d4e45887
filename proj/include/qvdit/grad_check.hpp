// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytic-vs-finite-difference sweep over the objective's gradients on a
// small seeded instance.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qvdit/numdiff.hpp"

namespace qvdit {

inline constexpr double kGradTolerance = 1e-5;
inline constexpr double kIdentityTolerance = 1e-14;

struct GradCheckDims {
  std::size_t frames = 4;
  std::size_t spatial = 3;
  std::size_t hidden = 5;
  double h = kDefaultFdStep;
  std::uint64_t seed = 0;
};

/// Negative control: perturbs the analytic tmd gradient before comparison.
enum class GradCorruption : std::uint8_t { none, tmd_grad };

struct GradCheckRow {
  std::string operation;
  double max_rel_error = 0.0;
  double tolerance = kGradTolerance;
  bool pass() const { return max_rel_error <= tolerance; }
};

struct GradCheckReport {
  GradCheckDims dims;
  std::vector<GradCheckRow> rows;
  /// max |simplified - expanded| over dL/dT entries.
  double identity_residual = 0.0;

  bool identity_pass() const { return identity_residual <= kIdentityTolerance; }
  bool pass() const;
};

GradCheckReport run_grad_check(const GradCheckDims& dims, GradCorruption corruption = GradCorruption::none);

}  // namespace qvdit
