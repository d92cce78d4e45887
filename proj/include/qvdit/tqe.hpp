// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// Token-aware quantization estimator: a rank-1 correction added to a
// quantized linear layer,
//
//   X W^T  ~  Q(X) Q(W)^T + E beta^T,   E[r] = (m_frame(r) * Q(X)[r, :]) . alpha
//
// with alpha in R^{d_in}, beta in R^{d_out} and one positive scale m_i per
// frame. Frame i (0-based) covers token rows [i*s, (i+1)*s).
#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "qvdit/quantizer.hpp"
#include "qvdit/rng.hpp"
#include "qvdit/tensor.hpp"

namespace qvdit {

struct FrameLayout {
  std::size_t spatial = 1;  // tokens per frame
  std::size_t frames = 1;

  std::size_t tokens() const noexcept { return spatial * frames; }
  std::size_t frame_begin(std::size_t frame) const noexcept { return frame * spatial; }
  std::size_t frame_of(std::size_t token) const noexcept { return token / spatial; }
  /// Throws ShapeError unless spatial, frames >= 1.
  void validate() const;
  /// Throws ShapeError unless x has layout.tokens() rows.
  void require_rows(const Tensor& x, const char* op) const;

  bool operator==(const FrameLayout&) const = default;
};

struct TqeParams {
  std::vector<double> alpha;  // d_in
  std::vector<double> beta;   // d_out
  std::vector<double> m;      // frames

  bool operator==(const TqeParams&) const = default;
};

/// Intermediate terms of the frame-scale initialisation.
struct FrameScaleTerms {
  std::vector<double> eta;    // softmax over frames of (1 - rho_i)
  std::vector<double> omega;  // share of total absolute mass per frame
  std::vector<double> m;      // eta / omega
};

/// rho_i is the cosine between flattened frame blocks of x and x_q. A frame
/// whose block norm is <= kNormEpsilon counts as rho_i = 1, and a frame with
/// no absolute mass gets m_i = 1 (its rows contribute nothing either way).
FrameScaleTerms frame_scale_terms(const Tensor& x, const Tensor& x_q, const FrameLayout& layout);
std::vector<double> init_m(const Tensor& x, const Tensor& x_q, const FrameLayout& layout);

/// alpha ~ Kaiming (fan_in = d_in), beta = 0, m from init_m.
TqeParams init_tqe(Rng& rng, std::size_t d_in, std::size_t d_out, const FrameLayout& layout,
                   const Tensor& x_calib, const Tensor& x_calib_q);

/// Per-token error estimate E (n x 1).
Tensor low_rank_error(const Tensor& x_q, const TqeParams& params, const FrameLayout& layout);

/// x_q w_q^T + E beta^T for already quantized operands.
Tensor tqe_apply(const Tensor& x_q, const Tensor& w_q, const TqeParams& params, const FrameLayout& layout);
/// tqe_apply with the weight supplied transposed (d_in x d_out). When err_out
/// is given it receives the n x 1 error factor.
Tensor tqe_apply_transposed(const Tensor& x_q, const Tensor& w_q_t, const TqeParams& params,
                            const FrameLayout& layout, Tensor* err_out = nullptr);

Tensor tqe_forward(const Tensor& x, const Tensor& w, const QuantSpec& wspec, const QuantSpec& aspec,
                   const TqeParams& params, const FrameLayout& layout);

/// Parameters added by the estimator: d_in + d_out + t.
std::size_t tqe_param_count(std::size_t d_in, std::size_t d_out, std::size_t frames);

/// Linear-layer shapes of full-size video DiTs, used to report the relative
/// overhead of the estimator at realistic scale.
struct LayerShapePreset {
  std::string_view name;
  std::size_t d_in;
  std::size_t d_out;
  std::size_t frames;
};

std::span<const LayerShapePreset> architecture_presets();

}  // namespace qvdit
