// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/numdiff.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qvdit/errors.hpp"

namespace qvdit {

Tensor central_difference(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("central_difference: step must be > 0");
  Tensor grad(x.shape());
  Tensor probe = x;
  auto p = probe.data();
  auto g = grad.data();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double orig = p[k];
    p[k] = orig + h;
    const double up = f(probe);
    p[k] = orig - h;
    const double down = f(probe);
    p[k] = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& analytic, const Tensor& reference) {
  if (analytic.shape() != reference.shape()) {
    throw ShapeError(fmt::format("max_relative_error: shapes {} and {} differ", shape_string(analytic.shape()),
                                 shape_string(reference.shape())));
  }
  auto a = analytic.data();
  auto r = reference.data();
  double worst = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    worst = std::max(worst, std::abs(a[k] - r[k]));
    scale = std::max(scale, std::abs(r[k]));
  }
  return scale > 0.0 ? worst / scale : worst;
}

}  // namespace qvdit
