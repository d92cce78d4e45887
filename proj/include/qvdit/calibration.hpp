// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// Post-training calibration against a frozen full-precision teacher.
//
// Trainable: per-channel weight scales (lr_quant) and the estimator's alpha,
// beta and m (lr_tqe). Activation parameters stay dynamic per token and are
// never trained. Gradients cross the rounding via the straight-through
// estimator; updates use Adam (0.9, 0.999, eps 1e-8, no weight decay).
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qvdit/tmd.hpp"
#include "qvdit/toy_model.hpp"

namespace qvdit {

enum class LossPoint : std::uint8_t {
  output = 0,     // loss on the final model output
  per_block = 1,  // loss summed over every block output
};

std::string_view to_string(LossPoint point);
LossPoint loss_point_from_string(std::string_view text);

struct LayerOverride {
  std::optional<int> w_bits;
  std::optional<int> a_bits;
  std::optional<bool> tqe;
  bool operator==(const LayerOverride&) const = default;
};

struct CalibConfig {
  int w_bits = 3;  // 0 = full precision
  int a_bits = 6;  // 0 = full precision
  double gamma = kDefaultGamma;
  std::size_t iters = 1500;
  std::size_t batch = 4;
  double lr_quant = 1e-6;
  double lr_tqe = 1e-5;
  std::uint64_t seed = 0;
  bool enable_tqe = true;
  bool enable_tmd = true;
  /// Initialise m from frame salience; when false m is fixed at 1.
  bool use_m = true;
  bool freeze_m = false;
  LossPoint loss_point = LossPoint::output;
  /// Keyed by linear-layer name, e.g. "block0.mlp.fc1".
  std::map<std::string, LayerOverride> layer_overrides;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool m_trainable() const noexcept { return enable_tqe && use_m && !freeze_m; }
  bool operator==(const CalibConfig&) const = default;
};

/// Desk-scale iteration budget: 1500 for <= 3-bit weights, 1000 for 4-5 bit,
/// 500 for 6-8 bit and full precision.
std::size_t default_iterations(int w_bits);

struct LossRecord {
  std::size_t iteration = 0;
  double task = 0.0;
  double temporal = 0.0;
  double total = 0.0;
};

struct MetricsReport {
  double mean_task_loss = 0.0;
  double mean_temporal_kl = 0.0;
  double mean_relation_gap = 0.0;      // ||T^FP - T^Q||_F
  double mean_relative_error = 0.0;    // ||S^FP - S^Q||_F / ||S^FP||_F
  std::size_t samples = 0;
};

struct CalibResult {
  QuantState state;
  std::vector<LossRecord> history;
  MetricsReport initial_metrics;  // on the calibration set, before training
  MetricsReport final_metrics;    // on the calibration set, after training
};

using GradientTap = std::function<void(std::size_t iteration, const std::vector<LayerGrads>& grads)>;

struct CalibHooks {
  /// Sees the batch-mean gradients of every iteration before the update.
  GradientTap gradient_tap;
  std::function<void(const LossRecord&)> progress;
};

/// Specs, min-max weight parameters and (if enabled) estimator parameters,
/// initialised from the first calibration latent.
QuantState initial_quant_state(const ToyDiT& model, const std::vector<Tensor>& calib_set, const CalibConfig& cfg);

/// Throws DivergenceError if a loss becomes non-finite.
CalibResult calibrate(const ToyDiT& model, const std::vector<Tensor>& calib_set, const CalibConfig& cfg,
                      const CalibHooks& hooks = {});

MetricsReport evaluate(const ToyDiT& model, const QuantState& state, const std::vector<Tensor>& eval_set);

struct AblationRow {
  std::string label;
  CalibConfig config;
  MetricsReport metrics;
};

inline constexpr std::size_t kAblationRows = 5;

/// Baseline PTQ, +TQE (w/o M), +TQE (w M), +TMD, Full. Each row is
/// calibrated on calib_set from base_cfg and scored on eval_set.
std::vector<AblationRow> run_ablation(const ToyDiT& model, const std::vector<Tensor>& calib_set,
                                      const std::vector<Tensor>& eval_set, const CalibConfig& base_cfg,
                                      const std::function<void(const AblationRow&)>& on_row = {});

/// The row configurations alone, in ladder order.
std::vector<std::pair<std::string, CalibConfig>> ablation_ladder(const CalibConfig& base_cfg);

}  // namespace qvdit
