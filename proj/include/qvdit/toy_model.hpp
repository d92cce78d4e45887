// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// A miniature video DiT over latents Z (n x d, n = s * t). Each block is
//
//   [x += o(softmax(q(x) k(x)^T / sqrt(d)) v(x))]     (attention variant only)
//   x += fc2(gelu(fc1(x)))
//
// Every linear layer is quantizable; attention scores, softmax, GELU and the
// residual adds always run in full precision.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qvdit/quantizer.hpp"
#include "qvdit/rng.hpp"
#include "qvdit/tensor.hpp"
#include "qvdit/tqe.hpp"

namespace qvdit {

enum class BlockKind : std::uint8_t { mlp = 0, attention_mlp = 1 };

std::string_view to_string(BlockKind kind);
BlockKind block_kind_from_string(std::string_view text);

struct ToyDiTConfig {
  std::size_t layers = 4;
  std::size_t hidden = 64;
  FrameLayout layout{16, 8};
  BlockKind kind = BlockKind::mlp;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ToyDiTConfig&) const = default;
};

struct Linear {
  std::string name;
  Tensor weight;             // d_out x d_in
  std::vector<double> bias;  // d_out

  std::size_t d_in() const { return weight.cols(); }
  std::size_t d_out() const { return weight.rows(); }
  bool operator==(const Linear&) const = default;
};

struct Attention {
  Linear q, k, v, o;
  bool operator==(const Attention&) const = default;
};

struct Block {
  std::optional<Attention> attention;
  Linear fc1, fc2;
  bool operator==(const Block&) const = default;
};

class ToyDiT {
 public:
  ToyDiT(ToyDiTConfig config, std::vector<Block> blocks);

  const ToyDiTConfig& config() const noexcept { return config_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  /// Linear layers in forward order.
  std::vector<const Linear*> linear_layers() const;
  std::vector<Linear*> mutable_linear_layers();
  std::size_t layer_count() const;

  bool operator==(const ToyDiT&) const = default;

 private:
  ToyDiTConfig config_;
  std::vector<Block> blocks_;
};

ToyDiT build_model(const ToyDiTConfig& cfg);

double gelu(double u);
double gelu_grad(double u);

/// Activations around every linear layer (forward order) and after every block.
struct LayerTrace {
  std::vector<Tensor> inputs;
  std::vector<Tensor> outputs;
  std::vector<Tensor> block_outputs;
};

struct ForwardResult {
  Tensor output;
  LayerTrace trace;
};

ForwardResult forward_fp(const ToyDiT& model, const Tensor& z);

struct LayerQuantState {
  QuantSpec weight_spec;
  QuantSpec act_spec;
  /// Explicit (possibly trained) weight parameters; recomputed from
  /// weight_spec when empty.
  std::vector<QuantParams> weight_params;
  bool tqe_enabled = false;
  TqeParams tqe;

  bool operator==(const LayerQuantState&) const = default;
};

using QuantState = std::vector<LayerQuantState>;

/// Fake-quantized weight of one layer under its state.
Tensor quantized_weight(const Linear& layer, const LayerQuantState& state);

/// Per-layer quantities that depend on the state but not on the input:
/// quantized weights, their transposes, and d(w_q)/d(scale) per element
/// (empty for pass-through layers). Shared by every sample of a batch.
struct PreparedWeights {
  std::vector<Tensor> w_q;
  std::vector<Tensor> w_q_t;
  std::vector<Tensor> scale_ste;
};

PreparedWeights prepare_weights(const ToyDiT& model, const QuantState& state);

/// Throws std::invalid_argument if state does not cover every linear layer.
ForwardResult forward_quant(const ToyDiT& model, const Tensor& z, const QuantState& state);
ForwardResult forward_quant(const ToyDiT& model, const Tensor& z, const QuantState& state,
                            const PreparedWeights& prepared);

/// Intermediates of one quantized forward, consumed by backward_quant.
struct QuantTape {
  struct LinearTape {
    Tensor x_q;
    Tensor err;  // low-rank error estimate (n x 1), empty without TQE
  };
  struct BlockTape {
    Tensor x_in;
    Tensor q, k, v, attn_probs, attn_mix;  // attention variant only
    Tensor x_mid;                          // after the attention residual
    Tensor pre_act, post_act;              // fc1 output, gelu output
  };
  std::vector<LinearTape> linears;
  std::vector<BlockTape> blocks;
  std::vector<Tensor> block_outputs;
  Tensor output;
};

QuantTape forward_quant_taped(const ToyDiT& model, const Tensor& z, const QuantState& state);
QuantTape forward_quant_taped(const ToyDiT& model, const Tensor& z, const QuantState& state,
                              const PreparedWeights& prepared);

struct LayerGrads {
  std::vector<double> scale;  // one per weight parameter set; empty if passthrough
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> m;
};

struct QuantGrads {
  std::vector<LayerGrads> layers;
  Tensor input;  // dL/dz
};

/// Reverse pass through the quantized model. block_output_grads[b], when
/// non-empty, is dL/d(block b output) from a loss read at that block; the
/// final block's entry carries the output loss. Rounding uses the
/// straight-through estimator: identity for activations (dynamic min-max
/// never clips) and scale_gradient_ste for weight scales.
QuantGrads backward_quant(const ToyDiT& model, const QuantState& state, const QuantTape& tape,
                          const std::vector<Tensor>& block_output_grads);
QuantGrads backward_quant(const ToyDiT& model, const QuantState& state, const QuantTape& tape,
                          const std::vector<Tensor>& block_output_grads, const PreparedWeights& prepared);

/// Synthetic calibration latents: prompts x timesteps entries. Each latent is
/// a random walk over frames, frame f+1 = frame f + step * N(0, 1), whose
/// first frame mixes a per-prompt base with timestep-dependent noise.
std::vector<Tensor> make_calibration_set(Rng& rng, const FrameLayout& layout, std::size_t hidden,
                                         std::size_t prompts, std::size_t timesteps, double frame_step);

}  // namespace qvdit
