// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qvdit {

/// Seeded random stream shared by every randomized operation.
///
/// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. The library's own transforms (53-bit uniform, Box-Muller
/// normal) replace the standard distributions, which are implementation
/// defined. A given seed therefore yields the same draws on every conforming
/// toolchain, up to last-ulp differences in the platform's log/cos/sin.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64+u53+box-muller";

  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random mantissa bits.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal.
  double normal();
  double normal(double mean, double stddev);

  /// Independent child stream; children of the same parent and stream id are
  /// identical.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qvdit
