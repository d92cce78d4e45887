// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/tqe.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "qvdit/errors.hpp"

namespace qvdit {

void FrameLayout::validate() const {
  if (spatial == 0 || frames == 0) {
    throw ShapeError(fmt::format("frame layout needs s >= 1 and t >= 1, got s={} t={}", spatial, frames));
  }
}

void FrameLayout::require_rows(const Tensor& x, const char* op) const {
  validate();
  if (x.rank() != 2 || x.rows() != tokens()) {
    throw ShapeError(fmt::format("{}: expected {} token rows (s={} x t={}), got shape {}", op, tokens(),
                                 spatial, frames, shape_string(x.shape())));
  }
}

FrameScaleTerms frame_scale_terms(const Tensor& x, const Tensor& x_q, const FrameLayout& layout) {
  layout.require_rows(x, "init_m");
  if (x.shape() != x_q.shape()) {
    throw ShapeError(fmt::format("init_m: shape mismatch {} vs {}", shape_string(x.shape()),
                                 shape_string(x_q.shape())));
  }
  const std::size_t t = layout.frames;
  std::vector<double> dissimilarity(t);
  std::vector<double> mass(t, 0.0);
  double total_mass = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    const auto block = x.row_block(layout.frame_begin(i), layout.spatial);
    const auto block_q = x_q.row_block(layout.frame_begin(i), layout.spatial);
    double rho = 1.0;
    if (norm2(block) > kNormEpsilon && norm2(block_q) > kNormEpsilon) rho = cosine(block, block_q);
    dissimilarity[i] = 1.0 - rho;
    for (double v : block) mass[i] += std::abs(v);
    total_mass += mass[i];
  }

  FrameScaleTerms terms;
  terms.eta = softmax_row(dissimilarity);
  terms.omega.resize(t);
  terms.m.resize(t);
  for (std::size_t i = 0; i < t; ++i) {
    terms.omega[i] = total_mass > 0.0 ? mass[i] / total_mass : 1.0 / static_cast<double>(t);
    terms.m[i] = terms.omega[i] > 0.0 ? terms.eta[i] / terms.omega[i] : 1.0;
  }
  return terms;
}

std::vector<double> init_m(const Tensor& x, const Tensor& x_q, const FrameLayout& layout) {
  return frame_scale_terms(x, x_q, layout).m;
}

TqeParams init_tqe(Rng& rng, std::size_t d_in, std::size_t d_out, const FrameLayout& layout,
                   const Tensor& x_calib, const Tensor& x_calib_q) {
  if (x_calib.rank() != 2 || x_calib.cols() != d_in) {
    throw ShapeError(fmt::format("init_tqe: calibration activations {} do not have d_in={} columns",
                                 shape_string(x_calib.shape()), d_in));
  }
  TqeParams params;
  params.alpha = kaiming_init(rng, 1, d_in).values();
  params.beta.assign(d_out, 0.0);
  params.m = init_m(x_calib, x_calib_q, layout);
  return params;
}

Tensor low_rank_error(const Tensor& x_q, const TqeParams& params, const FrameLayout& layout) {
  layout.require_rows(x_q, "low_rank_error");
  if (x_q.cols() != params.alpha.size()) {
    throw ShapeError(fmt::format("low_rank_error: activations have {} columns, alpha has {}", x_q.cols(),
                                 params.alpha.size()));
  }
  if (params.m.size() != layout.frames) {
    throw ShapeError(fmt::format("low_rank_error: m has {} entries for {} frames", params.m.size(), layout.frames));
  }
  Tensor err({x_q.rows(), 1});
  for (std::size_t r = 0; r < x_q.rows(); ++r) {
    const double m = params.m[layout.frame_of(r)];
    const auto row = x_q.row(r);
    double acc = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) acc += (m * row[k]) * params.alpha[k];
    err(r, 0) = acc;
  }
  return err;
}

Tensor tqe_apply(const Tensor& x_q, const Tensor& w_q, const TqeParams& params, const FrameLayout& layout) {
  if (w_q.rank() != 2) throw ShapeError("tqe: weight must be a matrix");
  return tqe_apply_transposed(x_q, transpose(w_q), params, layout);
}

Tensor tqe_apply_transposed(const Tensor& x_q, const Tensor& w_q_t, const TqeParams& params,
                            const FrameLayout& layout, Tensor* err_out) {
  Tensor out = matmul(x_q, w_q_t);
  if (params.beta.size() != w_q_t.cols()) {
    throw ShapeError(fmt::format("tqe: beta has {} entries for {} output channels", params.beta.size(), w_q_t.cols()));
  }
  Tensor err = low_rank_error(x_q, params, layout);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    const double e = err(r, 0);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += e * params.beta[c];
  }
  check_finite(out.data(), "tqe_apply");
  if (err_out != nullptr) *err_out = std::move(err);
  return out;
}

Tensor tqe_forward(const Tensor& x, const Tensor& w, const QuantSpec& wspec, const QuantSpec& aspec,
                   const TqeParams& params, const FrameLayout& layout) {
  return tqe_apply(fake_quant(x, aspec), fake_quant(w, wspec), params, layout);
}

std::size_t tqe_param_count(std::size_t d_in, std::size_t d_out, std::size_t frames) {
  return d_in + d_out + frames;
}

namespace {

// Hidden size 1152 with a 4x MLP, 16 latent frames: the transformer shape
// shared by the STDiT and Latte XL/2 families.
constexpr std::array<LayerShapePreset, 6> kPresets{{
    {"stdit-xl2.attn.qkv", 1152, 3456, 16},
    {"stdit-xl2.attn.proj", 1152, 1152, 16},
    {"stdit-xl2.cross.kv", 1152, 2304, 16},
    {"stdit-xl2.mlp.fc1", 1152, 4608, 16},
    {"stdit-xl2.mlp.fc2", 4608, 1152, 16},
    {"latte-xl2.attn.proj", 1152, 1152, 16},
}};

}  // namespace

std::span<const LayerShapePreset> architecture_presets() { return kPresets; }

}  // namespace qvdit
