// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/tmd.hpp"

#include <cmath>

#include <fmt/format.h>

#include "qvdit/errors.hpp"

namespace qvdit {

namespace {

void require_pair(const Tensor& s_fp, const Tensor& s_q, const char* op) {
  if (s_fp.shape() != s_q.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, shape_string(s_fp.shape()),
                                 shape_string(s_q.shape())));
  }
}

std::span<const double> frame_block(const Tensor& s, const FrameLayout& layout, std::size_t i) {
  return s.row_block(layout.frame_begin(i), layout.spatial);
}

}  // namespace

double task_loss(const Tensor& s_fp, const Tensor& s_q) {
  require_pair(s_fp, s_q, "task_loss");
  auto a = s_fp.data();
  auto b = s_q.data();
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return acc;
}

Tensor task_loss_grad(const Tensor& s_fp, const Tensor& s_q) {
  require_pair(s_fp, s_q, "task_loss_grad");
  Tensor g(s_q.shape());
  auto a = s_fp.data();
  auto b = s_q.data();
  auto o = g.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = -2.0 * (a[k] - b[k]);
  return g;
}

RelationMatrix relation_matrix(const Tensor& s, const FrameLayout& layout) {
  layout.require_rows(s, "relation_matrix");
  const std::size_t t = layout.frames;
  Tensor rel({t, t});
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = i; j < t; ++j) {
      const double c = cosine(frame_block(s, layout, i), frame_block(s, layout, j));
      rel(i, j) = c;
      rel(j, i) = c;
    }
  }
  return {std::move(rel)};
}

TemporalDistribution temporal_distribution(const RelationMatrix& tm) {
  return {softmax_rows(tm.values)};
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
  double acc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] > 0.0) acc += p[j] * std::log(p[j] / q[j]);
  }
  return acc;
}

double tmd_loss(const Tensor& s_fp, const Tensor& s_q, const FrameLayout& layout) {
  require_pair(s_fp, s_q, "tmd_loss");
  const TemporalDistribution d_fp = temporal_distribution(relation_matrix(s_fp, layout));
  const TemporalDistribution d_q = temporal_distribution(relation_matrix(s_q, layout));
  double acc = 0.0;
  for (std::size_t i = 0; i < layout.frames; ++i) acc += kl_divergence(d_fp.values.row(i), d_q.values.row(i));
  return acc;
}

Tensor grad_loss_wrt_relation(const TemporalDistribution& d_fp, const TemporalDistribution& d_q) {
  return subtract(d_q.values, d_fp.values);
}

Tensor grad_loss_wrt_relation_expanded(const TemporalDistribution& d_fp, const TemporalDistribution& d_q) {
  const Tensor& p = d_fp.values;
  const Tensor& q = d_q.values;
  if (p.shape() != q.shape()) throw ShapeError("grad_loss_wrt_relation: distribution shapes differ");
  Tensor g(p.shape());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t j = 0; j < p.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < p.cols(); ++k) acc += p(i, k) * q(i, j);
      g(i, j) = acc - p(i, j);
    }
  }
  return g;
}

std::vector<double> cosine_grad(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("cosine_grad: length mismatch");
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu <= kNormEpsilon || nv <= kNormEpsilon) {
    throw DegenerateNormError(fmt::format("cosine_grad: degenerate norm ({:g}, {:g})", nu, nv));
  }
  const double uv = dot(u, v);
  const double a = 1.0 / (nu * nv);
  const double b = uv / (nu * nu * nu * nv);
  std::vector<double> g(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) g[k] = a * v[k] - b * u[k];
  return g;
}

std::vector<double> grad_relation_wrt_frame(const Tensor& s_q, const FrameLayout& layout, std::size_t i,
                                            std::size_t j) {
  layout.require_rows(s_q, "grad_relation_wrt_frame");
  if (i >= layout.frames || j >= layout.frames) {
    throw ShapeError(fmt::format("grad_relation_wrt_frame: frame ({}, {}) outside t={}", i, j, layout.frames));
  }
  return cosine_grad(frame_block(s_q, layout, i), frame_block(s_q, layout, j));
}

Tensor tmd_grad(const Tensor& s_fp, const Tensor& s_q, const FrameLayout& layout) {
  require_pair(s_fp, s_q, "tmd_grad");
  const TemporalDistribution d_fp = temporal_distribution(relation_matrix(s_fp, layout));
  const TemporalDistribution d_q = temporal_distribution(relation_matrix(s_q, layout));
  const Tensor g_rel = grad_loss_wrt_relation(d_fp, d_q);

  Tensor grad(s_q.shape());
  const std::size_t t = layout.frames;
  for (std::size_t i = 0; i < t; ++i) {
    auto out = grad.row_block(layout.frame_begin(i), layout.spatial);
    for (std::size_t j = 0; j < t; ++j) {
      // cos is symmetric, so dT_ji/dv_i equals dT_ij/dv_i.
      const std::vector<double> d_cos = grad_relation_wrt_frame(s_q, layout, i, j);
      const double weight = g_rel(i, j) + g_rel(j, i);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += weight * d_cos[k];
    }
  }
  check_finite(grad.data(), "tmd_grad");
  return grad;
}

std::pair<LossReport, Tensor> total_loss_and_grad(const Tensor& s_fp, const Tensor& s_q,
                                                  const FrameLayout& layout, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("total_loss_and_grad: gamma must be >= 0");
  LossReport report;
  report.gamma = gamma;
  report.task = task_loss(s_fp, s_q);
  report.temporal = tmd_loss(s_fp, s_q, layout);
  Tensor grad = task_loss_grad(s_fp, s_q);
  if (gamma > 0.0) axpy_inplace(grad, gamma, tmd_grad(s_fp, s_q, layout));
  report.total = report.task + gamma * report.temporal;
  return {report, std::move(grad)};
}

}  // namespace qvdit
