// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/calibration.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qvdit/errors.hpp"

namespace qvdit {

std::string_view to_string(LossPoint point) { return point == LossPoint::output ? "output" : "per_block"; }

LossPoint loss_point_from_string(std::string_view text) {
  if (text == "output") return LossPoint::output;
  if (text == "per_block") return LossPoint::per_block;
  throw std::invalid_argument(fmt::format("unknown loss point '{}' (expected output or per_block)", text));
}

namespace {

void check_bits(int bits, const std::string& field) {
  if (bits != 0 && (bits < kMinBits || bits > kMaxBits)) {
    throw ConfigError(fmt::format("{} = {}: expected 0 (full precision) or {}..{}", field, bits, kMinBits, kMaxBits));
  }
}

QuantSpec weight_spec_for(int bits) {
  return bits == 0 ? QuantSpec::full_precision() : QuantSpec{bits, Granularity::per_channel, false};
}

QuantSpec act_spec_for(int bits) {
  return bits == 0 ? QuantSpec::full_precision() : QuantSpec{bits, Granularity::per_token, false};
}

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kMinScale = 1e-12;

class Adam {
 public:
  Adam(std::size_t size, double lr) : lr_(lr), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kAdamBeta1 * m_[i] + (1.0 - kAdamBeta1) * grads[i];
      v_[i] = kAdamBeta2 * v_[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
  }

 private:
  double lr_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct LayerOptimizer {
  std::optional<Adam> scale, alpha, beta, m;
};

void accumulate(std::vector<double>& into, const std::vector<double>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

void scale_all(std::vector<double>& v, double f) {
  for (double& x : v) x *= f;
}

struct TeacherOutputs {
  Tensor output;
  std::vector<Tensor> blocks;
};

}  // namespace

void CalibConfig::validate() const {
  check_bits(w_bits, "calib.w_bits");
  check_bits(a_bits, "calib.a_bits");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError(fmt::format("calib.gamma = {}: must be >= 0", gamma));
  if (batch < 1) throw ConfigError("calib.batch: must be >= 1");
  if (!(lr_quant > 0.0)) throw ConfigError(fmt::format("calib.lr_quant = {}: must be > 0", lr_quant));
  if (!(lr_tqe > 0.0)) throw ConfigError(fmt::format("calib.lr_tqe = {}: must be > 0", lr_tqe));
  for (const auto& [name, o] : layer_overrides) {
    if (o.w_bits) check_bits(*o.w_bits, "layers." + name + ".w_bits");
    if (o.a_bits) check_bits(*o.a_bits, "layers." + name + ".a_bits");
  }
}

std::size_t default_iterations(int w_bits) {
  if (w_bits >= kMinBits && w_bits <= 3) return 1500;
  if (w_bits == 4 || w_bits == 5) return 1000;
  return 500;
}

QuantState initial_quant_state(const ToyDiT& model, const std::vector<Tensor>& calib_set, const CalibConfig& cfg) {
  cfg.validate();
  const auto layers = model.linear_layers();
  for (const auto& [name, o] : cfg.layer_overrides) {
    const bool known = std::any_of(layers.begin(), layers.end(), [&](const Linear* l) { return l->name == name; });
    if (!known) throw ConfigError(fmt::format("layers.{}: no linear layer with that name", name));
  }

  QuantState state(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Linear& layer = *layers[i];
    LayerQuantState& st = state[i];
    int w_bits = cfg.w_bits;
    int a_bits = cfg.a_bits;
    bool tqe = cfg.enable_tqe;
    if (auto it = cfg.layer_overrides.find(layer.name); it != cfg.layer_overrides.end()) {
      w_bits = it->second.w_bits.value_or(w_bits);
      a_bits = it->second.a_bits.value_or(a_bits);
      tqe = tqe && it->second.tqe.value_or(true);
    }
    st.weight_spec = weight_spec_for(w_bits);
    st.act_spec = act_spec_for(a_bits);
    st.weight_params = compute_spec_params(layer.weight, st.weight_spec);
    st.tqe_enabled = tqe;
  }

  if (!cfg.enable_tqe) return state;
  if (calib_set.empty()) throw std::invalid_argument("initial_quant_state: empty calibration set");
  // The estimator is seeded from the teacher's activations on the first latent.
  const ForwardResult fp = forward_fp(model, calib_set.front());
  const Rng root(cfg.seed);
  const FrameLayout& layout = model.config().layout;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerQuantState& st = state[i];
    if (!st.tqe_enabled) continue;
    const Tensor& x = fp.trace.inputs[i];
    Rng rng = root.fork(i);
    st.tqe = init_tqe(rng, layers[i]->d_in(), layers[i]->d_out(), layout, x, fake_quant(x, st.act_spec));
    if (!cfg.use_m) st.tqe.m.assign(layout.frames, 1.0);
  }
  return state;
}

MetricsReport evaluate(const ToyDiT& model, const QuantState& state, const std::vector<Tensor>& eval_set) {
  MetricsReport report;
  const FrameLayout& layout = model.config().layout;
  const PreparedWeights prepared = prepare_weights(model, state);
  for (const Tensor& z : eval_set) {
    const Tensor fp = forward_fp(model, z).output;
    const Tensor q = forward_quant(model, z, state, prepared).output;
    report.mean_task_loss += task_loss(fp, q);
    report.mean_temporal_kl += tmd_loss(fp, q, layout);
    report.mean_relation_gap +=
        frobenius_norm(subtract(relation_matrix(fp, layout).values, relation_matrix(q, layout).values));
    const double ref = frobenius_norm(fp);
    report.mean_relative_error += ref > 0.0 ? frobenius_norm(subtract(fp, q)) / ref : 0.0;
  }
  report.samples = eval_set.size();
  if (report.samples > 0) {
    const auto n = static_cast<double>(report.samples);
    report.mean_task_loss /= n;
    report.mean_temporal_kl /= n;
    report.mean_relation_gap /= n;
    report.mean_relative_error /= n;
  }
  return report;
}

CalibResult calibrate(const ToyDiT& model, const std::vector<Tensor>& calib_set, const CalibConfig& cfg,
                      const CalibHooks& hooks) {
  cfg.validate();
  if (calib_set.empty()) throw std::invalid_argument("calibrate: empty calibration set");

  CalibResult result;
  result.state = initial_quant_state(model, calib_set, cfg);
  QuantState& state = result.state;
  const FrameLayout& layout = model.config().layout;
  const std::size_t blocks = model.blocks().size();
  const double gamma = cfg.enable_tmd ? cfg.gamma : 0.0;

  std::vector<TeacherOutputs> teacher;
  teacher.reserve(calib_set.size());
  for (const Tensor& z : calib_set) {
    ForwardResult fp = forward_fp(model, z);
    teacher.push_back({std::move(fp.output), std::move(fp.trace.block_outputs)});
  }

  result.initial_metrics = evaluate(model, state, calib_set);

  std::vector<LayerOptimizer> opt(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    const LayerQuantState& st = state[i];
    if (!st.weight_spec.passthrough) opt[i].scale.emplace(st.weight_params.size(), cfg.lr_quant);
    if (st.tqe_enabled) {
      opt[i].alpha.emplace(st.tqe.alpha.size(), cfg.lr_tqe);
      opt[i].beta.emplace(st.tqe.beta.size(), cfg.lr_tqe);
      if (cfg.m_trainable()) opt[i].m.emplace(st.tqe.m.size(), cfg.lr_tqe);
    }
  }

  result.history.reserve(cfg.iters);
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    try {
      std::vector<LayerGrads> grads;
      LossRecord record{it, 0.0, 0.0, 0.0};
      const PreparedWeights prepared = prepare_weights(model, state);
      // Batch members are reduced in index order.
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t idx = (it * cfg.batch + b) % calib_set.size();
        const QuantTape tape = forward_quant_taped(model, calib_set[idx], state, prepared);
        std::vector<Tensor> block_grads(blocks);
        if (cfg.loss_point == LossPoint::output) {
          auto [report, g] = total_loss_and_grad(teacher[idx].output, tape.output, layout, gamma);
          record.task += report.task;
          record.temporal += report.temporal;
          record.total += report.total;
          block_grads.back() = std::move(g);
        } else {
          for (std::size_t bi = 0; bi < blocks; ++bi) {
            auto [report, g] = total_loss_and_grad(teacher[idx].blocks[bi], tape.block_outputs[bi], layout, gamma);
            record.task += report.task;
            record.temporal += report.temporal;
            record.total += report.total;
            block_grads[bi] = std::move(g);
          }
        }
        QuantGrads qg = backward_quant(model, state, tape, block_grads, prepared);
        if (grads.empty()) {
          grads = std::move(qg.layers);
        } else {
          for (std::size_t i = 0; i < grads.size(); ++i) {
            accumulate(grads[i].scale, qg.layers[i].scale);
            accumulate(grads[i].alpha, qg.layers[i].alpha);
            accumulate(grads[i].beta, qg.layers[i].beta);
            accumulate(grads[i].m, qg.layers[i].m);
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(cfg.batch);
      record.task *= inv;
      record.temporal *= inv;
      record.total *= inv;
      if (!std::isfinite(record.task) || !std::isfinite(record.temporal) || !std::isfinite(record.total)) {
        throw DivergenceError(it, fmt::format("calibration diverged at iteration {}: non-finite loss", it));
      }
      for (LayerGrads& g : grads) {
        scale_all(g.scale, inv);
        scale_all(g.alpha, inv);
        scale_all(g.beta, inv);
        scale_all(g.m, inv);
      }
      if (hooks.gradient_tap) hooks.gradient_tap(it, grads);

      for (std::size_t i = 0; i < state.size(); ++i) {
        LayerQuantState& st = state[i];
        LayerOptimizer& o = opt[i];
        if (o.scale) {
          std::vector<double> scales(st.weight_params.size());
          for (std::size_t c = 0; c < scales.size(); ++c) scales[c] = st.weight_params[c].scale;
          o.scale->step(scales, grads[i].scale);
          for (std::size_t c = 0; c < scales.size(); ++c) {
            st.weight_params[c] = st.weight_params[c].with_scale(std::max(scales[c], kMinScale));
          }
        }
        if (o.alpha) o.alpha->step(st.tqe.alpha, grads[i].alpha);
        if (o.beta) o.beta->step(st.tqe.beta, grads[i].beta);
        if (o.m) o.m->step(st.tqe.m, grads[i].m);
      }
      result.history.push_back(record);
      if (hooks.progress) hooks.progress(record);
    } catch (const NonFiniteError& e) {
      throw DivergenceError(it, fmt::format("calibration diverged at iteration {}: {}", it, e.what()));
    }
  }

  result.final_metrics = evaluate(model, state, calib_set);
  return result;
}

std::vector<std::pair<std::string, CalibConfig>> ablation_ladder(const CalibConfig& base_cfg) {
  std::vector<std::pair<std::string, CalibConfig>> rows;
  auto make = [&](bool tqe, bool use_m, bool tmd) {
    CalibConfig c = base_cfg;
    c.enable_tqe = tqe;
    c.use_m = use_m;
    c.freeze_m = use_m ? base_cfg.freeze_m : true;
    c.enable_tmd = tmd;
    return c;
  };
  rows.emplace_back("Baseline PTQ", make(false, true, false));
  rows.emplace_back("+TQE (w/o M)", make(true, false, false));
  rows.emplace_back("+TQE (w M)", make(true, true, false));
  rows.emplace_back("+TMD", make(false, true, true));
  rows.emplace_back("Full", make(true, true, true));
  return rows;
}

std::vector<AblationRow> run_ablation(const ToyDiT& model, const std::vector<Tensor>& calib_set,
                                      const std::vector<Tensor>& eval_set, const CalibConfig& base_cfg,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  for (auto& [label, cfg] : ablation_ladder(base_cfg)) {
    const CalibResult result = calibrate(model, calib_set, cfg);
    rows.push_back({label, cfg, evaluate(model, result.state, eval_set)});
    if (on_row) on_row(rows.back());
  }
  return rows;
}

}  // namespace qvdit
