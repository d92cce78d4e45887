// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qvdit/rng.hpp"
#include "qvdit/tmd.hpp"

namespace qvdit {

bool GradCheckReport::pass() const {
  return identity_pass() && std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass(); });
}

namespace {

// sum_i KL(softmax(p_i) || softmax(t_i)) with T treated as a free matrix.
double relation_loss(const Tensor& t_fp, const Tensor& t_q) {
  const Tensor d_fp = softmax_rows(t_fp);
  const Tensor d_q = softmax_rows(t_q);
  double acc = 0.0;
  for (std::size_t i = 0; i < d_fp.rows(); ++i) acc += kl_divergence(d_fp.row(i), d_q.row(i));
  return acc;
}

}  // namespace

GradCheckReport run_grad_check(const GradCheckDims& dims, GradCorruption corruption) {
  const FrameLayout layout{dims.spatial, dims.frames};
  layout.validate();
  if (dims.hidden == 0) throw std::invalid_argument("grad check: hidden size must be >= 1");
  const double h = dims.h;

  Rng rng(dims.seed);
  const Tensor s_fp = normal_tensor(rng, {layout.tokens(), dims.hidden}, 1.0);
  Tensor s_q = s_fp;
  axpy_inplace(s_q, 0.3, normal_tensor(rng, s_fp.shape(), 1.0));

  GradCheckReport report;
  report.dims = dims;
  auto add_row = [&](std::string name, const Tensor& analytic, const Tensor& fd) {
    report.rows.push_back({std::move(name), max_relative_error(analytic, fd), kGradTolerance});
  };

  add_row("task_loss_grad", task_loss_grad(s_fp, s_q),
          central_difference([&](const Tensor& x) { return task_loss(s_fp, x); }, s_q, h));

  // dT_ij / dv_i for every frame pair.
  double worst_cos = 0.0;
  for (std::size_t i = 0; i < layout.frames; ++i) {
    for (std::size_t j = 0; j < layout.frames; ++j) {
      if (i == j) continue;
      const auto v_j = s_q.row_block(layout.frame_begin(j), layout.spatial);
      const std::vector<double> vj(v_j.begin(), v_j.end());
      const auto v_i = s_q.row_block(layout.frame_begin(i), layout.spatial);
      const Tensor vi = Tensor::vector({v_i.begin(), v_i.end()});
      const Tensor analytic = Tensor::vector(grad_relation_wrt_frame(s_q, layout, i, j));
      const Tensor fd = central_difference([&](const Tensor& x) { return cosine(x.data(), vj); }, vi, h);
      worst_cos = std::max(worst_cos, max_relative_error(analytic, fd));
    }
  }
  report.rows.push_back({"relation_frame_grad", worst_cos, kGradTolerance});

  const TemporalDistribution d_fp = temporal_distribution(relation_matrix(s_fp, layout));
  const TemporalDistribution d_q = temporal_distribution(relation_matrix(s_q, layout));
  const RelationMatrix t_fp = relation_matrix(s_fp, layout);
  const RelationMatrix t_q = relation_matrix(s_q, layout);
  const Tensor g_rel = grad_loss_wrt_relation(d_fp, d_q);
  add_row("relation_loss_grad", g_rel,
          central_difference([&](const Tensor& t) { return relation_loss(t_fp.values, t); }, t_q.values, h));

  const Tensor g_rel_expanded = grad_loss_wrt_relation_expanded(d_fp, d_q);
  {
    auto a = g_rel.data();
    auto b = g_rel_expanded.data();
    for (std::size_t k = 0; k < a.size(); ++k) {
      report.identity_residual = std::max(report.identity_residual, std::abs(a[k] - b[k]));
    }
  }

  Tensor g_tmd = tmd_grad(s_fp, s_q, layout);
  if (corruption == GradCorruption::tmd_grad) g_tmd = scale(g_tmd, 1.0 + 1e-3);
  add_row("tmd_grad", g_tmd,
          central_difference([&](const Tensor& x) { return tmd_loss(s_fp, x, layout); }, s_q, h));

  for (double gamma : {0.0, 1.0, 100.0}) {
    Tensor g_total = total_loss_and_grad(s_fp, s_q, layout, gamma).second;
    if (corruption == GradCorruption::tmd_grad && gamma > 0.0) axpy_inplace(g_total, gamma * 1e-3, g_tmd);
    const Tensor fd = central_difference(
        [&](const Tensor& x) { return task_loss(s_fp, x) + gamma * tmd_loss(s_fp, x, layout); }, s_q, h);
    add_row(fmt::format("total_grad(gamma={:g})", gamma), g_total, fd);
  }
  return report;
}

}  // namespace qvdit
