// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/quantizer.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>

#include <fmt/format.h>

#include "qvdit/errors.hpp"

namespace qvdit {

namespace {

// std::nearbyint honours the current rounding mode; the library never
// changes it, so this is round-half-to-even.
double round_even(double v) { return std::nearbyint(v); }

void require_bits(int bits) {
  if (bits < kMinBits || bits > kMaxBits) {
    throw std::invalid_argument(fmt::format("bit-width {} outside [{}, {}]", bits, kMinBits, kMaxBits));
  }
}

QuantParams degenerate_params(double value, int bits) {
  const auto levels = static_cast<double>((std::int64_t{1} << bits) - 1);
  const std::int64_t mid = std::int64_t{1} << (bits - 1);
  const double target = kRangeEpsilon / levels;
  QuantParams p;
  p.bits = bits;
  p.lower = value;
  p.upper = value;
  if (value == 0.0) {
    p.scale = target;
    p.zero_point = mid;
    return p;
  }
  // s = |c| / 2^k puts c exactly k binary steps from zero, so both c / s and
  // (q - z) * s are exact power-of-two rescalings.
  const double magnitude = std::abs(value);
  int k = static_cast<int>(std::ceil(std::log2(magnitude / target)));
  k = std::clamp(k, 0, 62);
  p.scale = std::ldexp(magnitude, -k);
  while (k < 62 && p.scale > target) {
    ++k;
    p.scale = std::ldexp(magnitude, -k);
  }
  const std::int64_t steps = std::int64_t{1} << k;
  p.zero_point = value > 0 ? mid - steps : mid + steps;
  return p;
}

}  // namespace

QuantParams QuantParams::with_scale(double new_scale) const {
  QuantParams p = *this;
  p.scale = new_scale;
  p.lower = static_cast<double>(-zero_point) * new_scale;
  p.upper = static_cast<double>(max_code() - zero_point) * new_scale;
  return p;
}

std::pair<double, double> min_max_range(std::span<const double> values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {*lo, *hi};
}

QuantParams compute_params(std::span<const double> slice, int bits, const RangePolicy& policy) {
  require_bits(bits);
  if (slice.empty()) throw ShapeError("compute_params: empty slice");
  check_finite(slice, "compute_params");
  const auto [lower, upper] = policy(slice);
  if (!(upper >= lower)) throw std::invalid_argument("compute_params: range policy returned u < l");
  if (upper - lower < kRangeEpsilon) return degenerate_params(0.5 * (lower + upper), bits);

  QuantParams p;
  p.bits = bits;
  p.lower = lower;
  p.upper = upper;
  p.scale = (upper - lower) / static_cast<double>(p.max_code());
  p.zero_point = static_cast<std::int64_t>(-round_even(lower / p.scale));
  return p;
}

std::int64_t quantize_value(double x, const QuantParams& p) {
  const double code = round_even(x / p.scale) + static_cast<double>(p.zero_point);
  return static_cast<std::int64_t>(std::clamp(code, 0.0, static_cast<double>(p.max_code())));
}

double dequantize_value(std::int64_t q, const QuantParams& p) {
  return static_cast<double>(q - p.zero_point) * p.scale;
}

double fake_quant_value(double x, const QuantParams& p) {
  return dequantize_value(quantize_value(x, p), p);
}

CodeTensor quantize(const Tensor& x, const QuantParams& p) {
  CodeTensor out{x.shape(), std::vector<std::int64_t>(x.size())};
  auto xs = x.data();
  for (std::size_t i = 0; i < xs.size(); ++i) out.codes[i] = quantize_value(xs[i], p);
  return out;
}

Tensor dequantize(const CodeTensor& q, const QuantParams& p) {
  std::vector<double> values(q.codes.size());
  for (std::size_t i = 0; i < q.codes.size(); ++i) {
    const std::int64_t code = q.codes[i];
    if (code < 0 || code > p.max_code()) {
      throw OutOfRangeCodeError(
          fmt::format("dequantize: code {} outside [0, {}] at index {}", code, p.max_code(), i));
    }
    values[i] = dequantize_value(code, p);
  }
  return Tensor(q.shape, std::move(values));
}

std::vector<QuantParams> compute_spec_params(const Tensor& x, const QuantSpec& spec) {
  if (spec.passthrough) return {};
  if (spec.granularity == Granularity::per_tensor) return {compute_params(x.data(), spec.bits)};
  std::vector<QuantParams> params;
  params.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) params.push_back(compute_params(x.row(r), spec.bits));
  return params;
}

Tensor fake_quant(const Tensor& x, const QuantParams& p) {
  Tensor out(x.shape());
  auto xs = x.data();
  auto os = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = fake_quant_value(xs[i], p);
  return out;
}

Tensor fake_quant_rows(const Tensor& x, std::span<const QuantParams> params) {
  if (params.size() != x.rows()) {
    throw ShapeError(fmt::format("fake_quant_rows: {} parameter sets for {} rows", params.size(), x.rows()));
  }
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const QuantParams& p = params[r];
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = fake_quant_value(in[j], p);
  }
  return out;
}

Tensor fake_quant(const Tensor& x, const QuantSpec& spec) {
  check_finite(x.data(), "fake_quant");
  if (spec.passthrough) return x;
  const auto params = compute_spec_params(x, spec);
  if (spec.granularity == Granularity::per_tensor) return fake_quant(x, params.front());
  return fake_quant_rows(x, params);
}

Tensor quant_error(const Tensor& w, const QuantSpec& spec) {
  return subtract(fake_quant(w, spec), w);
}

bool in_clip_range(double x, const QuantParams& p) {
  const double code = round_even(x / p.scale) + static_cast<double>(p.zero_point);
  return code >= 0.0 && code <= static_cast<double>(p.max_code());
}

double scale_gradient_ste(double x, const QuantParams& p) {
  const double ratio = x / p.scale;
  const double code = round_even(ratio) + static_cast<double>(p.zero_point);
  if (code < 0.0) return static_cast<double>(-p.zero_point);
  if (code > static_cast<double>(p.max_code())) return static_cast<double>(p.max_code() - p.zero_point);
  return round_even(ratio) - ratio;
}

}  // namespace qvdit
