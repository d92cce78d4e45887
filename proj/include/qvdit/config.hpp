// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// INI run configuration. Sections and keys:
//
//   [run]    seed
//   [model]  layers hidden spatial frames kind
//   [data]   prompts timesteps frame_step        (calibration latents)
//   [eval]   prompts timesteps frame_step        (held-out latents)
//   [calib]  w_bits a_bits gamma iters batch lr_quant lr_tqe enable_tqe
//            enable_tmd use_m freeze_m loss_point
//   [layers.<layer name>]  w_bits a_bits tqe
//
// Every key is optional. Bits of 0 mean full precision. When calib.iters is
// absent it follows default_iterations(w_bits). Overrides use the form
// "section.key=value"; the key is the text after the last dot.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "qvdit/calibration.hpp"
#include "qvdit/toy_model.hpp"

namespace qvdit {

struct DataConfig {
  std::size_t prompts = 10;
  std::size_t timesteps = 5;
  double frame_step = 0.3;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ToyDiTConfig model;
  DataConfig data;
  DataConfig eval{4, 5, 0.3};
  CalibConfig calib;

  /// Copies `seed` into the model and calibration configs.
  void apply_seed(std::uint64_t s);
  bool operator==(const RunConfig&) const = default;
};

/// Defaults with iters resolved for the default bit-width.
RunConfig default_run_config();

/// Throws ConfigError naming the file, section or key at fault.
RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {},
                       std::string_view origin = "<config>");
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// INI text that parses back to the same RunConfig; doubles use 17
/// significant digits.
std::string to_ini(const RunConfig& cfg);

/// Calibration and evaluation latents derived from cfg.seed.
std::vector<Tensor> make_calib_set(const RunConfig& cfg);
std::vector<Tensor> make_eval_set(const RunConfig& cfg);

}  // namespace qvdit
