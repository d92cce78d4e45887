// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "qvdit/calibration.hpp"
#include "qvdit/errors.hpp"
#include "qvdit/numdiff.hpp"
#include "qvdit/rng.hpp"
#include "qvdit/toy_model.hpp"

namespace qvdit {
namespace {

constexpr double kFdTolerance = 1e-6;

ToyDiTConfig small_config(BlockKind kind) {
  ToyDiTConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 6;
  cfg.layout = FrameLayout{2, 3};
  cfg.kind = kind;
  cfg.seed = 3;
  return cfg;
}

std::vector<Tensor> small_latents(const ToyDiTConfig& cfg, std::uint64_t seed, std::size_t n = 2) {
  Rng rng(seed);
  return make_calibration_set(rng, cfg.layout, cfg.hidden, n, 1, 0.3);
}

// Smooth instance: full-precision activations, 3-bit weights, estimator on
// with non-zero beta so that alpha and m receive gradient.
QuantState smooth_state(const ToyDiT& model, const std::vector<Tensor>& latents, std::uint64_t seed) {
  CalibConfig cfg;
  cfg.w_bits = 3;
  cfg.a_bits = 0;
  QuantState state = initial_quant_state(model, latents, cfg);
  Rng rng(seed);
  for (LayerQuantState& ls : state) {
    for (double& b : ls.tqe.beta) b = rng.normal(0.0, 0.5);
    for (double& m : ls.tqe.m) m = rng.uniform(0.5, 1.5);
  }
  return state;
}

// L = sum_b <block_out_b, G_b> over the blocks that carry a probe.
struct Probe {
  std::vector<Tensor> weights;

  double loss(const ToyDiT& model, const Tensor& z, const QuantState& state) const {
    const QuantTape tape = forward_quant_taped(model, z, state);
    double l = 0.0;
    for (std::size_t b = 0; b < weights.size(); ++b) {
      if (!weights[b].empty()) l += dot(tape.block_outputs[b].data(), weights[b].data());
    }
    return l;
  }
};

Probe output_probe(const ToyDiT& model, const Tensor& z, Rng& rng) {
  Probe p;
  p.weights.resize(model.config().layers);
  p.weights.back() = normal_tensor(rng, z.shape(), 1.0);
  return p;
}

Probe per_block_probe(const ToyDiT& model, const Tensor& z, Rng& rng) {
  Probe p;
  for (std::size_t b = 0; b < model.config().layers; ++b) p.weights.push_back(normal_tensor(rng, z.shape(), 1.0));
  return p;
}

QuantGrads analytic(const ToyDiT& model, const Tensor& z, const QuantState& state, const Probe& probe) {
  return backward_quant(model, state, forward_quant_taped(model, z, state), probe.weights);
}

// Finite difference over one parameter vector of the state.
Tensor fd_param(const ToyDiT& model, const Tensor& z, const QuantState& state, const Probe& probe,
                std::vector<double> TqeParams::*field, std::size_t layer) {
  const std::vector<double>& base = state[layer].tqe.*field;
  const auto f = [&](const Tensor& x) {
    QuantState s = state;
    s[layer].tqe.*field = x.values();
    return probe.loss(model, z, s);
  };
  return central_difference(f, Tensor({base.size()}, base));
}

class BackwardFd : public ::testing::TestWithParam<BlockKind> {};

TEST_P(BackwardFd, EstimatorParameters) {
  const ToyDiT model = build_model(small_config(GetParam()));
  const auto latents = small_latents(model.config(), 1);
  const QuantState state = smooth_state(model, latents, 2);
  Rng rng(3);
  const Probe probe = output_probe(model, latents[1], rng);
  const QuantGrads g = analytic(model, latents[1], state, probe);
  ASSERT_EQ(g.layers.size(), model.layer_count());
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const LayerGrads& lg = g.layers[l];
    EXPECT_LT(max_relative_error(Tensor({lg.alpha.size()}, lg.alpha),
                                 fd_param(model, latents[1], state, probe, &TqeParams::alpha, l)),
              kFdTolerance)
        << "alpha layer " << l;
    EXPECT_LT(max_relative_error(Tensor({lg.beta.size()}, lg.beta),
                                 fd_param(model, latents[1], state, probe, &TqeParams::beta, l)),
              kFdTolerance)
        << "beta layer " << l;
    EXPECT_LT(max_relative_error(Tensor({lg.m.size()}, lg.m),
                                 fd_param(model, latents[1], state, probe, &TqeParams::m, l)),
              kFdTolerance)
        << "m layer " << l;
  }
}

TEST_P(BackwardFd, InputGradient) {
  const ToyDiT model = build_model(small_config(GetParam()));
  const auto latents = small_latents(model.config(), 4);
  const QuantState state = smooth_state(model, latents, 5);
  Rng rng(6);
  for (const Probe& probe : {output_probe(model, latents[0], rng), per_block_probe(model, latents[0], rng)}) {
    const QuantGrads g = analytic(model, latents[0], state, probe);
    const auto f = [&](const Tensor& z) { return probe.loss(model, z, state); };
    EXPECT_LT(max_relative_error(g.input, central_difference(f, latents[0])), kFdTolerance);
  }
}

TEST_P(BackwardFd, PerBlockLossReachesEveryLayer) {
  const ToyDiT model = build_model(small_config(GetParam()));
  const auto latents = small_latents(model.config(), 7);
  const QuantState state = smooth_state(model, latents, 8);
  Rng rng(9);
  const Probe probe = per_block_probe(model, latents[0], rng);
  const QuantGrads g = analytic(model, latents[0], state, probe);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const LayerGrads& lg = g.layers[l];
    EXPECT_LT(max_relative_error(Tensor({lg.beta.size()}, lg.beta),
                                 fd_param(model, latents[0], state, probe, &TqeParams::beta, l)),
              kFdTolerance)
        << "beta layer " << l;
  }
}

TEST_P(BackwardFd, WeightScaleIsSteContraction) {
  // dL/dw_q comes from finite differences on a copy of the model whose
  // weights are the fake-quantized values, run with pass-through weights.
  // The scale gradient must be that tensor contracted with the STE factor.
  const ToyDiT model = build_model(small_config(GetParam()));
  const auto latents = small_latents(model.config(), 10);
  const QuantState state = smooth_state(model, latents, 11);
  Rng rng(12);
  const Probe probe = output_probe(model, latents[0], rng);
  const QuantGrads g = analytic(model, latents[0], state, probe);

  ToyDiT frozen = model;
  QuantState frozen_state = state;
  const auto layers = model.linear_layers();
  auto frozen_layers = frozen.mutable_linear_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    frozen_layers[l]->weight = quantized_weight(*layers[l], state[l]);
    frozen_state[l].weight_spec = QuantSpec::full_precision();
    frozen_state[l].weight_params.clear();
  }
  ASSERT_EQ(forward_quant(frozen, latents[0], frozen_state).output, forward_quant(model, latents[0], state).output);

  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto f = [&](const Tensor& w) {
      ToyDiT m = frozen;
      m.mutable_linear_layers()[l]->weight = w;
      return probe.loss(m, latents[0], frozen_state);
    };
    const Tensor d_wq = central_difference(f, frozen_layers[l]->weight);
    const Tensor& w = layers[l]->weight;
    const auto params = state[l].weight_params.empty() ? compute_spec_params(w, state[l].weight_spec)
                                                       : state[l].weight_params;
    std::vector<double> expected(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (std::size_t c = 0; c < w.cols(); ++c) expected[r] += d_wq(r, c) * scale_gradient_ste(w(r, c), params[r]);
    }
    EXPECT_LT(max_relative_error(Tensor({g.layers[l].scale.size()}, g.layers[l].scale),
                                 Tensor({expected.size()}, expected)),
              kFdTolerance)
        << "scale layer " << l;
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, BackwardFd, ::testing::Values(BlockKind::mlp, BlockKind::attention_mlp),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(ToyModel, BuildIsDeterministicAndNamed) {
  const ToyDiTConfig cfg = small_config(BlockKind::attention_mlp);
  EXPECT_EQ(build_model(cfg), build_model(cfg));
  const ToyDiT model = build_model(cfg);
  EXPECT_EQ(model.layer_count(), 12u);
  EXPECT_EQ(model.linear_layers().front()->name, "block0.attn.q");
  EXPECT_EQ(model.linear_layers().back()->name, "block1.mlp.fc2");
  EXPECT_EQ(build_model(small_config(BlockKind::mlp)).layer_count(), 4u);
}

TEST(ToyModel, FullPrecisionStateMatchesTeacherBitForBit) {
  for (BlockKind kind : {BlockKind::mlp, BlockKind::attention_mlp}) {
    const ToyDiT model = build_model(small_config(kind));
    const auto latents = small_latents(model.config(), 13);
    CalibConfig cfg;
    cfg.w_bits = 0;
    cfg.a_bits = 0;
    cfg.enable_tqe = false;
    const QuantState state = initial_quant_state(model, latents, cfg);
    EXPECT_EQ(forward_quant(model, latents[0], state).output, forward_fp(model, latents[0]).output);
  }
}

TEST(ToyModel, ZeroBetaEstimatorIsNeutralBitForBit) {
  for (BlockKind kind : {BlockKind::mlp, BlockKind::attention_mlp}) {
    const ToyDiT model = build_model(small_config(kind));
    const auto latents = small_latents(model.config(), 14);
    CalibConfig cfg;
    cfg.w_bits = 3;
    cfg.a_bits = 6;
    QuantState with = initial_quant_state(model, latents, cfg);
    cfg.enable_tqe = false;
    const QuantState without = initial_quant_state(model, latents, cfg);
    for (const LayerQuantState& ls : with) {
      ASSERT_TRUE(ls.tqe_enabled);
      for (double b : ls.tqe.beta) ASSERT_EQ(b, 0.0);
    }
    EXPECT_EQ(forward_quant(model, latents[1], with).output, forward_quant(model, latents[1], without).output);
  }
}

TEST(ToyModel, TapedAndPreparedForwardAgree) {
  const ToyDiT model = build_model(small_config(BlockKind::attention_mlp));
  const auto latents = small_latents(model.config(), 15);
  const QuantState state = smooth_state(model, latents, 16);
  const Tensor plain = forward_quant(model, latents[0], state).output;
  EXPECT_EQ(forward_quant_taped(model, latents[0], state).output, plain);
  EXPECT_EQ(forward_quant(model, latents[0], state, prepare_weights(model, state)).output, plain);
}

TEST(ToyModel, TraceCoversEveryLayerAndBlock) {
  const ToyDiT model = build_model(small_config(BlockKind::attention_mlp));
  const auto latents = small_latents(model.config(), 17);
  const ForwardResult r = forward_fp(model, latents[0]);
  EXPECT_EQ(r.trace.inputs.size(), model.layer_count());
  EXPECT_EQ(r.trace.outputs.size(), model.layer_count());
  EXPECT_EQ(r.trace.block_outputs.size(), 2u);
  EXPECT_EQ(r.trace.block_outputs.back(), r.output);
}

TEST(ToyModel, GeluMatchesReferenceAndDerivative) {
  for (double u = -6.0; u <= 6.0; u += 0.25) {
    const double ref = 0.5 * u * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (u + 0.044715 * u * u * u)));
    EXPECT_NEAR(gelu(u), ref, 1e-14 * std::max(1.0, std::abs(u)));
    const double h = 1e-6;
    EXPECT_NEAR(gelu_grad(u), (gelu(u + h) - gelu(u - h)) / (2 * h), 1e-8);
  }
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_TRUE(std::isfinite(gelu(-800.0)));
  EXPECT_TRUE(std::isfinite(gelu(800.0)));
}

TEST(ToyModel, LatentShapeMismatchThrows) {
  const ToyDiT model = build_model(small_config(BlockKind::mlp));
  EXPECT_THROW(forward_fp(model, Tensor::matrix(6, 5)), ShapeError);
  EXPECT_THROW(forward_fp(model, Tensor::matrix(7, 6)), ShapeError);
}

TEST(ToyModel, CalibrationSetShapeAndDeterminism) {
  const ToyDiTConfig cfg = small_config(BlockKind::mlp);
  Rng a(1), b(1);
  const auto x = make_calibration_set(a, cfg.layout, cfg.hidden, 3, 2, 0.3);
  EXPECT_EQ(x.size(), 6u);
  EXPECT_EQ(x[0].shape(), (std::vector<std::size_t>{6, 6}));
  EXPECT_EQ(x, make_calibration_set(b, cfg.layout, cfg.hidden, 3, 2, 0.3));
}

}  // namespace
}  // namespace qvdit
