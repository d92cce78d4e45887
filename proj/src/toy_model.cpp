// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/toy_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "qvdit/errors.hpp"

namespace qvdit {

std::string_view to_string(BlockKind kind) {
  return kind == BlockKind::mlp ? "mlp" : "attention";
}

BlockKind block_kind_from_string(std::string_view text) {
  if (text == "mlp") return BlockKind::mlp;
  if (text == "attention" || text == "attention+mlp") return BlockKind::attention_mlp;
  throw std::invalid_argument(fmt::format("unknown block kind '{}' (expected mlp or attention)", text));
}

void ToyDiTConfig::validate() const {
  if (layers == 0 || hidden == 0) {
    throw ShapeError(fmt::format("toy model needs layers >= 1 and hidden >= 1, got {} and {}", layers, hidden));
  }
  layout.validate();
}

ToyDiT::ToyDiT(ToyDiTConfig config, std::vector<Block> blocks)
    : config_(std::move(config)), blocks_(std::move(blocks)) {}

std::vector<const Linear*> ToyDiT::linear_layers() const {
  std::vector<const Linear*> out;
  for (const Block& b : blocks_) {
    if (b.attention) {
      out.push_back(&b.attention->q);
      out.push_back(&b.attention->k);
      out.push_back(&b.attention->v);
      out.push_back(&b.attention->o);
    }
    out.push_back(&b.fc1);
    out.push_back(&b.fc2);
  }
  return out;
}

std::vector<Linear*> ToyDiT::mutable_linear_layers() {
  std::vector<Linear*> out;
  for (Block& b : blocks_) {
    if (b.attention) {
      out.push_back(&b.attention->q);
      out.push_back(&b.attention->k);
      out.push_back(&b.attention->v);
      out.push_back(&b.attention->o);
    }
    out.push_back(&b.fc1);
    out.push_back(&b.fc2);
  }
  return out;
}

std::size_t ToyDiT::layer_count() const {
  const std::size_t per_block = config_.kind == BlockKind::attention_mlp ? 6 : 2;
  return per_block * blocks_.size();
}

namespace {

constexpr double kBiasStd = 0.1;

Linear make_linear(Rng& rng, std::string name, std::size_t d_in, std::size_t d_out, double gain) {
  Linear l;
  l.name = std::move(name);
  l.weight = scale(kaiming_init(rng, d_out, d_in), gain);
  l.bias.resize(d_out);
  for (double& b : l.bias) b = rng.normal(0.0, kBiasStd);
  return l;
}

void add_bias_inplace(Tensor& y, const std::vector<double>& bias) {
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

Tensor apply_gelu(const Tensor& u) {
  Tensor g(u.shape());
  auto in = u.data();
  auto out = g.data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = gelu(in[i]);
  return g;
}

struct ForwardScratch {
  std::vector<QuantTape::BlockTape> blocks;
  std::vector<Tensor> block_outputs;
  Tensor output;
};

// One forward skeleton for both executions, so the full-precision and
// quantized paths differ only in what `linear` does.
template <typename LinearFn>
ForwardScratch run_forward(const ToyDiT& model, const Tensor& z, LinearFn&& linear, bool keep_tape) {
  const ToyDiTConfig& cfg = model.config();
  cfg.layout.require_rows(z, "forward");
  if (z.cols() != cfg.hidden) {
    throw ShapeError(fmt::format("forward: latent has {} features, model hidden size is {}", z.cols(), cfg.hidden));
  }
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));

  ForwardScratch out;
  std::size_t idx = 0;
  Tensor x = z;
  for (const Block& block : model.blocks()) {
    QuantTape::BlockTape tape;
    if (keep_tape) tape.x_in = x;
    if (block.attention) {
      const Attention& att = *block.attention;
      Tensor q = linear(idx++, att.q, x);
      Tensor k = linear(idx++, att.k, x);
      Tensor v = linear(idx++, att.v, x);
      Tensor probs = softmax_rows(scale(matmul_nt(q, k), score_scale));
      Tensor mix = matmul(probs, v);
      Tensor o = linear(idx++, att.o, mix);
      add_inplace(x, o);
      if (keep_tape) {
        tape.q = std::move(q);
        tape.k = std::move(k);
        tape.v = std::move(v);
        tape.attn_probs = std::move(probs);
        tape.attn_mix = std::move(mix);
      }
    }
    if (keep_tape) tape.x_mid = x;
    Tensor u = linear(idx++, block.fc1, x);
    Tensor g = apply_gelu(u);
    Tensor y = linear(idx++, block.fc2, g);
    add_inplace(x, y);
    if (keep_tape) {
      tape.pre_act = std::move(u);
      tape.post_act = std::move(g);
      out.blocks.push_back(std::move(tape));
    }
    out.block_outputs.push_back(x);
  }
  out.output = std::move(x);
  return out;
}

void require_state(const ToyDiT& model, const QuantState& state) {
  if (state.size() != model.layer_count()) {
    throw std::invalid_argument(fmt::format("quant state covers {} layers, model has {}", state.size(),
                                            model.layer_count()));
  }
}

}  // namespace

ToyDiT build_model(const ToyDiTConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t d = cfg.hidden;
  // Residual branches are damped by 1/sqrt(2L) so the stream stays O(1).
  const double out_gain = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.layers));
  std::vector<Block> blocks;
  for (std::size_t b = 0; b < cfg.layers; ++b) {
    Block block;
    const std::string prefix = fmt::format("block{}", b);
    if (cfg.kind == BlockKind::attention_mlp) {
      Attention att;
      att.q = make_linear(rng, prefix + ".attn.q", d, d, 1.0);
      att.k = make_linear(rng, prefix + ".attn.k", d, d, 1.0);
      att.v = make_linear(rng, prefix + ".attn.v", d, d, 1.0);
      att.o = make_linear(rng, prefix + ".attn.o", d, d, out_gain);
      block.attention = std::move(att);
    }
    block.fc1 = make_linear(rng, prefix + ".mlp.fc1", d, 4 * d, 1.0);
    block.fc2 = make_linear(rng, prefix + ".mlp.fc2", 4 * d, d, out_gain);
    blocks.push_back(std::move(block));
  }
  return ToyDiT(cfg, std::move(blocks));
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

// tanh(c (u + a u^3)) from one exp; saturates cleanly when exp overflows.
double gelu_tanh(double u) {
  const double x = kGeluC * (u + kGeluA * u * u * u);
  return 1.0 - 2.0 / (1.0 + std::exp(2.0 * x));
}

}  // namespace

double gelu(double u) { return 0.5 * u * (1.0 + gelu_tanh(u)); }

double gelu_grad(double u) {
  const double th = gelu_tanh(u);
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

ForwardResult forward_fp(const ToyDiT& model, const Tensor& z) {
  ForwardResult result;
  auto linear = [&](std::size_t, const Linear& layer, const Tensor& x) {
    Tensor y = matmul_nt(x, layer.weight);
    add_bias_inplace(y, layer.bias);
    result.trace.inputs.push_back(x);
    result.trace.outputs.push_back(y);
    return y;
  };
  ForwardScratch scratch = run_forward(model, z, linear, false);
  result.output = std::move(scratch.output);
  result.trace.block_outputs = std::move(scratch.block_outputs);
  return result;
}

Tensor quantized_weight(const Linear& layer, const LayerQuantState& state) {
  if (state.weight_spec.passthrough) return layer.weight;
  if (state.weight_params.empty()) return fake_quant(layer.weight, state.weight_spec);
  if (state.weight_params.size() == 1 && state.weight_spec.granularity == Granularity::per_tensor) {
    return fake_quant(layer.weight, state.weight_params.front());
  }
  return fake_quant_rows(layer.weight, state.weight_params);
}

PreparedWeights prepare_weights(const ToyDiT& model, const QuantState& state) {
  require_state(model, state);
  const auto layers = model.linear_layers();
  PreparedWeights pw;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Linear& layer = *layers[i];
    const LayerQuantState& st = state[i];
    Tensor w_q = quantized_weight(layer, st);
    pw.w_q_t.push_back(transpose(w_q));
    pw.w_q.push_back(std::move(w_q));
    Tensor ste;
    if (!st.weight_spec.passthrough) {
      const std::vector<QuantParams> params =
          st.weight_params.empty() ? compute_spec_params(layer.weight, st.weight_spec) : st.weight_params;
      const bool shared = params.size() == 1 && st.weight_spec.granularity == Granularity::per_tensor;
      ste = Tensor(layer.weight.shape());
      for (std::size_t o = 0; o < layer.d_out(); ++o) {
        const QuantParams& qp = shared ? params.front() : params[o];
        const auto w = layer.weight.row(o);
        auto out = ste.row(o);
        for (std::size_t k = 0; k < w.size(); ++k) out[k] = scale_gradient_ste(w[k], qp);
      }
    }
    pw.scale_ste.push_back(std::move(ste));
  }
  return pw;
}

namespace {

void require_prepared(const QuantState& state, const PreparedWeights& pw) {
  if (pw.w_q.size() != state.size() || pw.w_q_t.size() != state.size() || pw.scale_ste.size() != state.size()) {
    throw std::invalid_argument("prepared weights do not match the quant state");
  }
}

Tensor quant_linear(const Linear& layer, const LayerQuantState& st, const Tensor& w_q_t, const FrameLayout& layout,
                    const Tensor& x, QuantTape::LinearTape* tape) {
  Tensor x_q = fake_quant(x, st.act_spec);
  Tensor err;
  Tensor y = st.tqe_enabled ? tqe_apply_transposed(x_q, w_q_t, st.tqe, layout, &err) : matmul(x_q, w_q_t);
  add_bias_inplace(y, layer.bias);
  if (tape != nullptr) {
    tape->err = std::move(err);
    tape->x_q = std::move(x_q);
  }
  return y;
}

}  // namespace

ForwardResult forward_quant(const ToyDiT& model, const Tensor& z, const QuantState& state) {
  return forward_quant(model, z, state, prepare_weights(model, state));
}

ForwardResult forward_quant(const ToyDiT& model, const Tensor& z, const QuantState& state,
                            const PreparedWeights& prepared) {
  require_state(model, state);
  require_prepared(state, prepared);
  ForwardResult result;
  const FrameLayout& layout = model.config().layout;
  auto linear = [&](std::size_t idx, const Linear& layer, const Tensor& x) {
    Tensor y = quant_linear(layer, state[idx], prepared.w_q_t[idx], layout, x, nullptr);
    result.trace.inputs.push_back(x);
    result.trace.outputs.push_back(y);
    return y;
  };
  ForwardScratch scratch = run_forward(model, z, linear, false);
  result.output = std::move(scratch.output);
  result.trace.block_outputs = std::move(scratch.block_outputs);
  return result;
}

QuantTape forward_quant_taped(const ToyDiT& model, const Tensor& z, const QuantState& state) {
  return forward_quant_taped(model, z, state, prepare_weights(model, state));
}

QuantTape forward_quant_taped(const ToyDiT& model, const Tensor& z, const QuantState& state,
                              const PreparedWeights& prepared) {
  require_state(model, state);
  require_prepared(state, prepared);
  QuantTape tape;
  tape.linears.resize(state.size());
  const FrameLayout& layout = model.config().layout;
  auto linear = [&](std::size_t idx, const Linear& layer, const Tensor& x) {
    return quant_linear(layer, state[idx], prepared.w_q_t[idx], layout, x, &tape.linears[idx]);
  };
  ForwardScratch scratch = run_forward(model, z, linear, true);
  tape.blocks = std::move(scratch.blocks);
  tape.block_outputs = std::move(scratch.block_outputs);
  tape.output = std::move(scratch.output);
  return tape;
}

namespace {

// dL/dx for one quantized linear layer; parameter gradients accumulate into
// `grads`.
Tensor linear_backward(const LayerQuantState& st, const QuantTape::LinearTape& lt, const Tensor& w_q,
                       const Tensor& scale_ste, const FrameLayout& layout, const Tensor& d_out, LayerGrads& grads) {
  Tensor d_xq = matmul(d_out, w_q);

  if (st.tqe_enabled) {
    const TqeParams& p = st.tqe;
    const std::size_t n = d_out.rows();
    const std::size_t d_in = lt.x_q.cols();
    for (std::size_t r = 0; r < n; ++r) {
      const auto dy = d_out.row(r);
      const double e = lt.err(r, 0);
      double g = 0.0;
      for (std::size_t o = 0; o < dy.size(); ++o) {
        g += dy[o] * p.beta[o];
        grads.beta[o] += e * dy[o];
      }
      const std::size_t f = layout.frame_of(r);
      const double m = p.m[f];
      const auto xq = lt.x_q.row(r);
      auto dx = d_xq.row(r);
      double x_alpha = 0.0;
      for (std::size_t k = 0; k < d_in; ++k) {
        x_alpha += xq[k] * p.alpha[k];
        grads.alpha[k] += g * m * xq[k];
        dx[k] += g * m * p.alpha[k];
      }
      grads.m[f] += g * x_alpha;
    }
  }

  if (!st.weight_spec.passthrough) {
    const Tensor d_wq = matmul_tn(d_out, lt.x_q);
    const bool shared = grads.scale.size() == 1 && st.weight_spec.granularity == Granularity::per_tensor;
    for (std::size_t o = 0; o < d_wq.rows(); ++o) {
      const auto ste = scale_ste.row(o);
      const auto dw = d_wq.row(o);
      double acc = 0.0;
      for (std::size_t k = 0; k < dw.size(); ++k) acc += dw[k] * ste[k];
      grads.scale[shared ? 0 : o] += acc;
    }
  }
  return d_xq;
}

LayerGrads zero_grads(const LayerQuantState& st, const Linear& layer) {
  LayerGrads g;
  if (!st.weight_spec.passthrough) {
    const bool shared = st.weight_spec.granularity == Granularity::per_tensor;
    g.scale.assign(shared ? 1 : layer.d_out(), 0.0);
  }
  if (st.tqe_enabled) {
    g.alpha.assign(st.tqe.alpha.size(), 0.0);
    g.beta.assign(st.tqe.beta.size(), 0.0);
    g.m.assign(st.tqe.m.size(), 0.0);
  }
  return g;
}

}  // namespace

QuantGrads backward_quant(const ToyDiT& model, const QuantState& state, const QuantTape& tape,
                          const std::vector<Tensor>& block_output_grads) {
  return backward_quant(model, state, tape, block_output_grads, prepare_weights(model, state));
}

QuantGrads backward_quant(const ToyDiT& model, const QuantState& state, const QuantTape& tape,
                          const std::vector<Tensor>& block_output_grads, const PreparedWeights& prepared) {
  require_state(model, state);
  require_prepared(state, prepared);
  const ToyDiTConfig& cfg = model.config();
  const auto layers = model.linear_layers();
  if (block_output_grads.size() != model.blocks().size()) {
    throw std::invalid_argument(fmt::format("backward_quant: {} block gradients for {} blocks",
                                            block_output_grads.size(), model.blocks().size()));
  }

  QuantGrads grads;
  for (std::size_t i = 0; i < layers.size(); ++i) grads.layers.push_back(zero_grads(state[i], *layers[i]));

  const std::size_t per_block = cfg.kind == BlockKind::attention_mlp ? 6 : 2;
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  auto back = [&](std::size_t idx, const Tensor& d_out) {
    return linear_backward(state[idx], tape.linears[idx], prepared.w_q[idx], prepared.scale_ste[idx], cfg.layout,
                           d_out, grads.layers[idx]);
  };

  Tensor dx = Tensor::matrix(cfg.layout.tokens(), cfg.hidden);
  for (std::size_t bi = model.blocks().size(); bi-- > 0;) {
    if (!block_output_grads[bi].empty()) add_inplace(dx, block_output_grads[bi]);
    const Block& block = model.blocks()[bi];
    const QuantTape::BlockTape& bt = tape.blocks[bi];
    const std::size_t base = bi * per_block;
    const std::size_t fc1 = base + (block.attention ? 4 : 0);

    Tensor d_post = back(fc1 + 1, dx);
    Tensor d_pre(d_post.shape());
    {
      auto dp = d_post.data();
      auto u = bt.pre_act.data();
      auto out = d_pre.data();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = dp[i] * gelu_grad(u[i]);
    }
    Tensor d_mid = add(dx, back(fc1, d_pre));

    if (!block.attention) {
      dx = std::move(d_mid);
      continue;
    }
    Tensor d_mix = back(base + 3, d_mid);
    Tensor d_probs = matmul_nt(d_mix, bt.v);
    Tensor d_v = matmul_tn(bt.attn_probs, d_mix);
    Tensor d_scores(d_probs.shape());
    for (std::size_t r = 0; r < d_probs.rows(); ++r) {
      const auto pr = bt.attn_probs.row(r);
      const auto dp = d_probs.row(r);
      const double inner = dot(pr, dp);
      auto ds = d_scores.row(r);
      for (std::size_t c = 0; c < ds.size(); ++c) ds[c] = pr[c] * (dp[c] - inner) * score_scale;
    }
    const Tensor d_q = matmul(d_scores, bt.k);
    const Tensor d_k = matmul_tn(d_scores, bt.q);
    add_inplace(d_mid, back(base + 0, d_q));
    add_inplace(d_mid, back(base + 1, d_k));
    add_inplace(d_mid, back(base + 2, d_v));
    dx = std::move(d_mid);
  }
  grads.input = std::move(dx);
  return grads;
}

std::vector<Tensor> make_calibration_set(Rng& rng, const FrameLayout& layout, std::size_t hidden,
                                         std::size_t prompts, std::size_t timesteps, double frame_step) {
  layout.validate();
  if (prompts == 0 || timesteps == 0) throw std::invalid_argument("calibration set needs prompts, timesteps >= 1");
  if (!(frame_step >= 0.0)) throw std::invalid_argument("frame step must be >= 0");
  const std::size_t s = layout.spatial;
  std::vector<Tensor> latents;
  latents.reserve(prompts * timesteps);
  for (std::size_t p = 0; p < prompts; ++p) {
    const Tensor base = normal_tensor(rng, {s, hidden}, 1.0);
    for (std::size_t tau = 0; tau < timesteps; ++tau) {
      // Signal level falls linearly from 1 to 0.1 across the timestep grid.
      const double signal =
          timesteps == 1 ? 1.0 : 1.0 - 0.9 * static_cast<double>(tau) / static_cast<double>(timesteps - 1);
      const double noise = std::sqrt(1.0 - signal * signal);
      Tensor z({layout.tokens(), hidden});
      auto first = z.row_block(0, s);
      const auto b = base.data();
      for (std::size_t k = 0; k < first.size(); ++k) first[k] = signal * b[k] + noise * rng.normal();
      for (std::size_t f = 1; f < layout.frames; ++f) {
        const auto prev = z.row_block(layout.frame_begin(f - 1), s);
        auto cur = z.row_block(layout.frame_begin(f), s);
        for (std::size_t k = 0; k < cur.size(); ++k) cur[k] = prev[k] + frame_step * rng.normal();
      }
      latents.push_back(std::move(z));
    }
  }
  return latents;
}

}  // namespace qvdit
