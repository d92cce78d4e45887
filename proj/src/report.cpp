// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/report.hpp"

#include <chrono>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>

#include "qvdit/errors.hpp"

namespace qvdit {

using nlohmann::ordered_json;

namespace {

std::string g17(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

std::string loss_csv(const std::vector<LossRecord>& history) {
  std::string out = "iteration,task,temporal,total\n";
  for (const LossRecord& r : history) {
    out += fmt::format("{},{},{},{}\n", r.iteration, g17(r.task), g17(r.temporal), g17(r.total));
  }
  return out;
}

std::string metrics_table(const MetricsReport& m) {
  std::string out;
  out += fmt::format("{:<22} {:>14}\n", "metric", "value");
  out += fmt::format("{:<22} {:>14.6g}\n", "task loss", m.mean_task_loss);
  out += fmt::format("{:<22} {:>14.6g}\n", "temporal KL", m.mean_temporal_kl);
  out += fmt::format("{:<22} {:>14.6g}\n", "relation gap", m.mean_relation_gap);
  out += fmt::format("{:<22} {:>14.6g}\n", "relative error", m.mean_relative_error);
  out += fmt::format("{:<22} {:>14}\n", "samples", m.samples);
  return out;
}

std::string metrics_json(const MetricsReport& m) {
  ordered_json j;
  j["mean_task_loss"] = m.mean_task_loss;
  j["mean_temporal_kl"] = m.mean_temporal_kl;
  j["mean_relation_gap"] = m.mean_relation_gap;
  j["mean_relative_error"] = m.mean_relative_error;
  j["samples"] = m.samples;
  return j.dump(2) + "\n";
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = fmt::format("{:<14} {:>14} {:>14} {:>14} {:>14}\n", "method", "task loss", "temporal KL",
                                "relation gap", "rel. error");
  for (const AblationRow& r : rows) {
    out += fmt::format("{:<14} {:>14.6g} {:>14.6g} {:>14.6g} {:>14.6g}\n", r.label, r.metrics.mean_task_loss,
                       r.metrics.mean_temporal_kl, r.metrics.mean_relation_gap, r.metrics.mean_relative_error);
  }
  return out;
}

std::string ablation_csv(const std::vector<std::pair<std::uint64_t, std::vector<AblationRow>>>& runs) {
  std::string out = "seed,method,task,temporal,relation_gap,relative_error\n";
  for (const auto& [seed, rows] : runs) {
    for (const AblationRow& r : rows) {
      out += fmt::format("{},{},{},{},{},{}\n", seed, r.label, g17(r.metrics.mean_task_loss),
                         g17(r.metrics.mean_temporal_kl), g17(r.metrics.mean_relation_gap),
                         g17(r.metrics.mean_relative_error));
    }
  }
  return out;
}

std::string grad_check_table(const GradCheckReport& report) {
  const GradCheckDims& d = report.dims;
  std::string out = fmt::format("instance: frames={} spatial={} hidden={} h={:g} seed={}\n", d.frames, d.spatial,
                                d.hidden, d.h, d.seed);
  out += fmt::format("{:<24} {:>14} {:>10}  {}\n", "operation", "max rel err", "tolerance", "result");
  for (const GradCheckRow& r : report.rows) {
    out += fmt::format("{:<24} {:>14.3e} {:>10.0e}  {}\n", r.operation, r.max_rel_error, r.tolerance,
                       r.pass() ? "PASS" : "FAIL");
  }
  out += fmt::format("{:<24} {:>14.3e} {:>10.0e}  {}\n", "dL/dT identity residual", report.identity_residual,
                     kIdentityTolerance, report.identity_pass() ? "PASS" : "FAIL");
  return out;
}

std::string entropy_csv(const std::vector<EntropyCase>& cases) {
  std::string out = "seed,bits,h_weight,h_delta,holds\n";
  for (const EntropyCase& c : cases) {
    out += fmt::format("{},{},{},{},{}\n", c.seed, c.bits, g17(c.check.h_weight), g17(c.check.h_error),
                       c.check.holds ? 1 : 0);
  }
  return out;
}

std::string manifest_json(const RunManifest& manifest) {
  ordered_json j;
  j["tool"] = "qvdit";
  j["version"] = QVDIT_VERSION;
  j["command"] = manifest.command;
  j["seed"] = manifest.config.seed;
  j["rng"] = std::string(Rng::kAlgorithm);
  j["config"] = to_ini(manifest.config);
  j["files"] = manifest.files;
  j["started_at"] = manifest.started_at;
  j["finished_at"] = manifest.finished_at;
  return j.dump(2) + "\n";
}

std::string utc_timestamp() {
  const auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace qvdit
