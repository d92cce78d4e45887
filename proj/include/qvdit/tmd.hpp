// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// Task loss and temporal maintenance distillation.
//
// For an output S (n x d) split into t frame blocks v_1..v_t:
//   T_ij = cos(v_i, v_j)               (relation matrix, diagonal included)
//   D_i  = softmax(T_i,1 .. T_i,t)     (temporal distribution of frame i)
//   L_temporal = sum_i KL(D_i^FP || D_i^Q),  natural log
//   L_task     = ||S^FP - S^Q||^2       (plain sum of squares)
//   L_total    = L_task + gamma * L_temporal
//
// Gradients are taken with respect to S^Q only; the teacher is frozen.
#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "qvdit/tensor.hpp"
#include "qvdit/tqe.hpp"

namespace qvdit {

inline constexpr double kDefaultGamma = 100.0;

struct RelationMatrix {
  Tensor values;  // t x t, symmetric, unit diagonal
};

struct TemporalDistribution {
  Tensor values;  // t x t, row-stochastic
};

struct LossReport {
  double task = 0.0;
  double temporal = 0.0;
  double total = 0.0;
  double gamma = 0.0;
};

double task_loss(const Tensor& s_fp, const Tensor& s_q);
/// dL_task / dS^Q = -2 (S^FP - S^Q).
Tensor task_loss_grad(const Tensor& s_fp, const Tensor& s_q);

RelationMatrix relation_matrix(const Tensor& s, const FrameLayout& layout);
TemporalDistribution temporal_distribution(const RelationMatrix& tm);

/// sum_j p_j log(p_j / q_j).
double kl_divergence(std::span<const double> p, std::span<const double> q);

double tmd_loss(const Tensor& s_fp, const Tensor& s_q, const FrameLayout& layout);

/// dL_temporal / dT^Q_ij = D^Q_ij - D^FP_ij.
Tensor grad_loss_wrt_relation(const TemporalDistribution& d_fp, const TemporalDistribution& d_q);
/// The same quantity before using sum_k D^FP_ik = 1:
/// sum_k D^FP_ik D^Q_ij - D^FP_ij. Kept as a cross-check of the fast form.
Tensor grad_loss_wrt_relation_expanded(const TemporalDistribution& d_fp, const TemporalDistribution& d_q);

/// d cos(u, v) / du = v / (|u||v|) - (u.v) u / (|u|^3 |v|).
std::vector<double> cosine_grad(std::span<const double> u, std::span<const double> v);

/// dT_ij / dv_i for the frames of s_q, flattened (s * d).
std::vector<double> grad_relation_wrt_frame(const Tensor& s_q, const FrameLayout& layout, std::size_t i,
                                            std::size_t j);

/// dL_temporal / dS^Q. Frame i collects, for every j, the (i, j) path
/// G_ij dT_ij/dv_i and the mirrored (j, i) path G_ji dT_ji/dv_i.
Tensor tmd_grad(const Tensor& s_fp, const Tensor& s_q, const FrameLayout& layout);

std::pair<LossReport, Tensor> total_loss_and_grad(const Tensor& s_fp, const Tensor& s_q,
                                                  const FrameLayout& layout, double gamma);

}  // namespace qvdit
