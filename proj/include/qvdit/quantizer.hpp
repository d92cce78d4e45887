// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// Uniform affine quantization:
//   q  = clip(round(x / s) + z, 0, 2^N - 1),  s = (u - l) / (2^N - 1),  z = -round(l / s)
//   x' = (q - z) * s
// round() is round-half-to-even throughout.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "qvdit/tensor.hpp"

namespace qvdit {

inline constexpr double kRangeEpsilon = 1e-12;
inline constexpr int kMinBits = 2;
inline constexpr int kMaxBits = 8;

enum class Granularity : std::uint8_t {
  per_tensor = 0,
  per_channel = 1,  // one parameter set per weight output row
  per_token = 2,    // one parameter set per activation row, recomputed on every call
};

struct QuantSpec {
  int bits = 8;
  Granularity granularity = Granularity::per_tensor;
  /// Full-precision mode: fake_quant is the identity.
  bool passthrough = false;

  static QuantSpec full_precision() { return {0, Granularity::per_tensor, true}; }
  bool operator==(const QuantSpec&) const = default;
};

struct QuantParams {
  double scale = 1.0;
  std::int64_t zero_point = 0;
  double lower = 0.0;
  double upper = 0.0;
  int bits = 8;

  std::int64_t max_code() const noexcept { return (std::int64_t{1} << bits) - 1; }
  /// Same zero-point with a new scale; the clipping range [l, u] follows the
  /// grid so that s == (u - l) / (2^N - 1) still holds.
  QuantParams with_scale(double new_scale) const;

  bool operator==(const QuantParams&) const = default;
};

/// Integer codes with the shape of the tensor they were computed from.
struct CodeTensor {
  std::vector<std::size_t> shape;
  std::vector<std::int64_t> codes;
};

using RangePolicy = std::function<std::pair<double, double>(std::span<const double>)>;

std::pair<double, double> min_max_range(std::span<const double> values);

/// Parameters for one slice. Ranges narrower than kRangeEpsilon get a scale
/// just below kRangeEpsilon / (2^N - 1), chosen so the constant lands on the
/// mid-grid code and dequantizes back to itself exactly.
QuantParams compute_params(std::span<const double> slice, int bits,
                           const RangePolicy& policy = min_max_range);

std::int64_t quantize_value(double x, const QuantParams& p);
double dequantize_value(std::int64_t q, const QuantParams& p);
double fake_quant_value(double x, const QuantParams& p);

CodeTensor quantize(const Tensor& x, const QuantParams& p);
/// Throws OutOfRangeCodeError for codes outside [0, 2^N - 1].
Tensor dequantize(const CodeTensor& q, const QuantParams& p);

/// One entry for per_tensor, one per row otherwise. Empty for passthrough.
std::vector<QuantParams> compute_spec_params(const Tensor& x, const QuantSpec& spec);

Tensor fake_quant(const Tensor& x, const QuantSpec& spec);
Tensor fake_quant(const Tensor& x, const QuantParams& p);
/// Row i uses params[i].
Tensor fake_quant_rows(const Tensor& x, std::span<const QuantParams> params);

/// fake_quant(w, spec) - w.
Tensor quant_error(const Tensor& w, const QuantSpec& spec);

/// True when x maps inside [0, 2^N - 1] before clipping.
bool in_clip_range(double x, const QuantParams& p);
/// Straight-through derivative of fake_quant_value with respect to the scale:
/// round(x/s) - x/s inside the clip range, (q_clip - z) outside.
double scale_gradient_ste(double x, const QuantParams& p);

}  // namespace qvdit
