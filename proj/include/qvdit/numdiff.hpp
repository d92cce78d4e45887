// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "qvdit/tensor.hpp"

namespace qvdit {

inline constexpr double kDefaultFdStep = 1e-6;

using ScalarFn = std::function<double(const Tensor&)>;

/// (f(x + h e_k) - f(x - h e_k)) / 2h for every coordinate k of x.
Tensor central_difference(const ScalarFn& f, const Tensor& x, double h = kDefaultFdStep);

/// max_k |a_k - r_k| / max_k |r_k|. Falls back to the absolute error when the
/// reference is identically zero. Shapes must match.
double max_relative_error(const Tensor& analytic, const Tensor& reference);

}  // namespace qvdit
