// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the qvdit executable. Exit codes: 0 success,
// 1 configuration, input or check failure, 2 calibration divergence.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qvdit/grad_check.hpp"
#include "qvdit/quantizer.hpp"

namespace qvdit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitDivergence = 2;

struct CommonOptions {
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;   // replaces run.seed
  std::vector<std::string> overrides;  // "section.key=value"
  bool quiet = false;
};

int cmd_calibrate(const std::optional<std::filesystem::path>& config, const CommonOptions& opts, std::ostream& out,
                  std::ostream& err);
int cmd_evaluate(const std::optional<std::filesystem::path>& config, const std::filesystem::path& archive,
                 const CommonOptions& opts, std::ostream& out, std::ostream& err);
/// Runs the ladder once per seed; with several seeds also prints the mean.
int cmd_ablation(const std::optional<std::filesystem::path>& config, const std::vector<std::uint64_t>& seeds,
                 const CommonOptions& opts, std::ostream& out, std::ostream& err);
int cmd_grad_check(const GradCheckDims& dims, GradCorruption corruption, std::ostream& out, std::ostream& err);

struct EntropySweep {
  std::uint64_t seeds = 1000;
  std::vector<int> bits{2, 3, 4};
  std::size_t rows = 64;
  std::size_t cols = 64;
  Granularity granularity = Granularity::per_channel;
};

int cmd_entropy_check(const EntropySweep& sweep, const CommonOptions& opts, std::ostream& out, std::ostream& err);

/// Argument parsing and dispatch.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace qvdit
