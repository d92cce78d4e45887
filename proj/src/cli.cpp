// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include "qvdit/archive.hpp"
#include "qvdit/calibration.hpp"
#include "qvdit/config.hpp"
#include "qvdit/entropy.hpp"
#include "qvdit/errors.hpp"
#include "qvdit/report.hpp"

namespace qvdit {

namespace fs = std::filesystem;

namespace {

RunConfig resolve_config(const std::optional<fs::path>& path, const CommonOptions& opts) {
  RunConfig cfg = path ? load_config(*path, opts.overrides) : parse_config("", opts.overrides, "<defaults>");
  if (opts.seed) cfg.apply_seed(*opts.seed);
  return cfg;
}

fs::path prepare_out_dir(const CommonOptions& opts, const char* command) {
  fs::path dir = opts.out_dir.empty() ? fs::path("qvdit-runs") / command : opts.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
  return dir;
}

void write_manifest(const fs::path& dir, RunManifest manifest) {
  manifest.finished_at = utc_timestamp();
  write_text(dir / "manifest.json", manifest_json(manifest));
}

// Maps library exceptions onto exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int cmd_calibrate(const std::optional<fs::path>& config, const CommonOptions& opts, std::ostream& out,
                  std::ostream& err) {
  return guarded(err, [&] {
    const std::string started = utc_timestamp();
    const RunConfig cfg = resolve_config(config, opts);
    const fs::path dir = prepare_out_dir(opts, "calibrate");

    const ToyDiT model = build_model(cfg.model);
    const std::vector<Tensor> calib_set = make_calib_set(cfg);
    CalibHooks hooks;
    if (!opts.quiet) {
      hooks.progress = [&](const LossRecord& r) {
        if ((r.iteration + 1) % 100 == 0 || r.iteration + 1 == cfg.calib.iters) {
          err << fmt::format("iter {:>5}/{}  task {:.6g}  temporal {:.6g}  total {:.6g}\n", r.iteration + 1,
                             cfg.calib.iters, r.task, r.temporal, r.total);
        }
      };
    }
    const CalibResult result = calibrate(model, calib_set, cfg.calib, hooks);

    save_archive(dir / "archive.qvda", model, result.state);
    write_text(dir / "loss.csv", loss_csv(result.history));
    write_text(dir / "metrics.json", metrics_json(result.final_metrics));
    write_text(dir / "config.ini", to_ini(cfg));
    out << "calibration set metrics, before:\n" << metrics_table(result.initial_metrics);
    out << "calibration set metrics, after:\n" << metrics_table(result.final_metrics);
    out << "wrote " << dir.string() << "\n";
    write_manifest(dir, {"calibrate", cfg, started, {}, {"archive.qvda", "loss.csv", "metrics.json", "config.ini"}});
    return kExitOk;
  });
}

int cmd_evaluate(const std::optional<fs::path>& config, const fs::path& archive_path, const CommonOptions& opts,
                 std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::string started = utc_timestamp();
    const RunConfig cfg = resolve_config(config, opts);
    const Archive archive = load_archive(archive_path);
    check_archive_matches(archive, cfg.model);
    const fs::path dir = prepare_out_dir(opts, "evaluate");

    const MetricsReport metrics = evaluate(archive.model, archive.state, make_eval_set(cfg));
    write_text(dir / "metrics.json", metrics_json(metrics));
    out << metrics_table(metrics);
    write_manifest(dir, {"evaluate", cfg, started, {}, {"metrics.json"}});
    return kExitOk;
  });
}

int cmd_ablation(const std::optional<fs::path>& config, const std::vector<std::uint64_t>& seeds,
                 const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::string started = utc_timestamp();
    RunConfig cfg = resolve_config(config, opts);
    const fs::path dir = prepare_out_dir(opts, "ablation");
    std::vector<std::uint64_t> run_seeds = seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : seeds;

    std::vector<std::pair<std::uint64_t, std::vector<AblationRow>>> runs;
    for (std::uint64_t seed : run_seeds) {
      cfg.apply_seed(seed);
      const ToyDiT model = build_model(cfg.model);
      const std::vector<Tensor> calib_set = make_calib_set(cfg);
      auto on_row = [&](const AblationRow& r) {
        if (!opts.quiet) err << fmt::format("seed {}: {} done\n", seed, r.label);
      };
      std::vector<AblationRow> rows = run_ablation(model, calib_set, make_eval_set(cfg), cfg.calib, on_row);
      out << fmt::format("seed {}\n", seed) << ablation_table(rows) << "\n";
      runs.emplace_back(seed, std::move(rows));
    }
    if (runs.size() > 1) {
      std::vector<AblationRow> mean = runs.front().second;
      for (AblationRow& row : mean) row.metrics = {};
      const double n = static_cast<double>(runs.size());
      for (const auto& [seed, rows] : runs) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          mean[i].metrics.mean_task_loss += rows[i].metrics.mean_task_loss / n;
          mean[i].metrics.mean_temporal_kl += rows[i].metrics.mean_temporal_kl / n;
          mean[i].metrics.mean_relation_gap += rows[i].metrics.mean_relation_gap / n;
          mean[i].metrics.mean_relative_error += rows[i].metrics.mean_relative_error / n;
          mean[i].metrics.samples += rows[i].metrics.samples;
        }
      }
      out << fmt::format("mean over {} seeds\n", runs.size()) << ablation_table(mean);
    }
    write_text(dir / "ablation.csv", ablation_csv(runs));
    write_manifest(dir, {"ablation", cfg, started, {}, {"ablation.csv"}});
    return kExitOk;
  });
}

int cmd_grad_check(const GradCheckDims& dims, GradCorruption corruption, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const GradCheckReport report = run_grad_check(dims, corruption);
    out << grad_check_table(report);
    return report.pass() ? kExitOk : kExitFailure;
  });
}

int cmd_entropy_check(const EntropySweep& sweep, const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    for (int b : sweep.bits) {
      if (b < kMinBits || b > kMaxBits) {
        throw ConfigError(fmt::format("bits {}: expected {}..{}", b, kMinBits, kMaxBits));
      }
    }
    if (sweep.rows == 0 || sweep.cols == 0) throw ConfigError("matrix rows and cols must be >= 1");
    const fs::path dir = prepare_out_dir(opts, "entropy-check");
    std::vector<EntropyCase> cases;
    std::size_t failures = 0;
    for (std::uint64_t seed = 0; seed < sweep.seeds; ++seed) {
      Rng rng(seed);
      const Tensor w = normal_tensor(rng, {sweep.rows, sweep.cols}, 1.0);
      for (int bits : sweep.bits) {
        const EntropyCheck check = verify_entropy_theorem(w, {bits, sweep.granularity, false});
        if (!check.holds) ++failures;
        cases.push_back({seed, bits, check});
      }
    }
    write_text(dir / "entropy.csv", entropy_csv(cases));
    out << fmt::format("{} cases, {} violations of H(delta) <= H(W) + {:g}\n", cases.size(), failures,
                       kEntropyTolerance);
    out << "wrote " << (dir / "entropy.csv").string() << "\n";
    return failures == 0 ? kExitOk : kExitFailure;
  });
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Desk-scale video DiT quantization: calibration, evaluation and verification"};
  app.set_version_flag("--version", std::string(QVDIT_VERSION));
  app.require_subcommand(1);

  CommonOptions common;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Replace run.seed");
  app.add_option("--out-dir", common.out_dir, "Output directory (default qvdit-runs/<command>)");
  app.add_option("--set", common.overrides, "Config override section.key=value (repeatable)");
  app.add_flag("-q,--quiet", common.quiet, "No progress output");

  std::optional<fs::path> config;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option_function<std::string>("-c,--config", [&](const std::string& p) { config = fs::path(p); },
                                          "INI config file (defaults when omitted)");
  };

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Calibrate a quantized toy model and write an archive");
  add_config(calibrate_cmd);

  fs::path archive;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score an archive on the held-out latents");
  add_config(evaluate_cmd);
  evaluate_cmd->add_option("-a,--archive", archive, "Archive written by calibrate")->required();

  std::vector<std::uint64_t> seeds;
  auto* ablation_cmd = app.add_subcommand("ablation", "Run the five-row ablation ladder");
  add_config(ablation_cmd);
  ablation_cmd->add_option("--seeds", seeds, "Seeds to sweep (default run.seed)")->delimiter(',');

  GradCheckDims dims;
  bool corrupt = false;
  auto* grad_cmd = app.add_subcommand("grad-check", "Compare analytic gradients with finite differences");
  grad_cmd->add_option("--frames", dims.frames)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--spatial", dims.spatial)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--hidden", dims.hidden)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--step", dims.h, "Finite-difference step")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--instance-seed", dims.seed);
  grad_cmd->add_flag("--corrupt-gradient", corrupt, "Negative control: perturb the analytic tmd gradient");

  EntropySweep sweep;
  std::string granularity = "per_channel";
  auto* entropy_cmd = app.add_subcommand("entropy-check", "Sweep seeded matrices for H(delta) <= H(W)");
  entropy_cmd->add_option("--seeds", sweep.seeds, "Number of matrices");
  entropy_cmd->add_option("--bits", sweep.bits, "Bit-widths")->delimiter(',');
  entropy_cmd->add_option("--rows", sweep.rows)->check(CLI::PositiveNumber);
  entropy_cmd->add_option("--cols", sweep.cols)->check(CLI::PositiveNumber);
  entropy_cmd->add_option("--granularity", granularity)
      ->check(CLI::IsMember({"per_tensor", "per_channel", "per_token"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << QVDIT_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  if (seed_opt->count() > 0) common.seed = seed;

  if (calibrate_cmd->parsed()) return cmd_calibrate(config, common, out, err);
  if (evaluate_cmd->parsed()) return cmd_evaluate(config, archive, common, out, err);
  if (ablation_cmd->parsed()) return cmd_ablation(config, seeds, common, out, err);
  if (grad_cmd->parsed()) {
    return cmd_grad_check(dims, corrupt ? GradCorruption::tmd_grad : GradCorruption::none, out, err);
  }
  if (entropy_cmd->parsed()) {
    sweep.granularity = granularity == "per_tensor"    ? Granularity::per_tensor
                        : granularity == "per_channel" ? Granularity::per_channel
                                                       : Granularity::per_token;
    return cmd_entropy_check(sweep, common, out, err);
  }
  return kExitFailure;
}

}  // namespace qvdit
