// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qvdit/calibration.hpp"
#include "qvdit/config.hpp"
#include "qvdit/entropy.hpp"
#include "qvdit/grad_check.hpp"

namespace qvdit {

/// "iteration,task,temporal,total" with 17 significant digits per value.
std::string loss_csv(const std::vector<LossRecord>& history);

std::string metrics_table(const MetricsReport& m);
std::string metrics_json(const MetricsReport& m);

std::string ablation_table(const std::vector<AblationRow>& rows);
/// One line per (seed, row); seed column first.
std::string ablation_csv(const std::vector<std::pair<std::uint64_t, std::vector<AblationRow>>>& runs);

std::string grad_check_table(const GradCheckReport& report);

struct EntropyCase {
  std::uint64_t seed = 0;
  int bits = 0;
  EntropyCheck check;
};
std::string entropy_csv(const std::vector<EntropyCase>& cases);

struct RunManifest {
  std::string command;
  RunConfig config;
  std::string started_at;   // UTC, ISO 8601
  std::string finished_at;
  std::vector<std::string> files;  // relative to the run directory
};

/// Timestamps live only here, so every other output is reproducible.
std::string manifest_json(const RunManifest& manifest);
std::string utc_timestamp();

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace qvdit
