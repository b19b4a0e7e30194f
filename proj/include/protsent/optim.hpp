#pragma once

#include <cmath>
#include <numbers>

#include "protsent/model.hpp"

namespace protsent {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  AdamWConfig config;
  AdapterGrads m;  // first moments
  AdapterGrads v;  // second moments
  std::size_t step = 0;

  static OptimizerState for_params(const AdapterParams& p, AdamWConfig cfg = {}) {
    return {cfg, AdapterGrads::zeros_like(p), AdapterGrads::zeros_like(p), 0};
  }
};

namespace detail {

template <typename Param, typename Grad>
void adamw_update(Param& param, const Grad& grad, Grad& m, Grad& v, const AdamWConfig& c, double lr, double bc1,
                  double bc2) {
  param *= 1.0 - lr * c.weight_decay;
  m = c.beta1 * m + (1.0 - c.beta1) * grad;
  v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}

}  // namespace detail

/// Decoupled weight decay (param *= 1 - lr * wd) followed by the
/// bias-corrected Adam step.
inline void adamw_step(OptimizerState& state, AdapterParams& params, const AdapterGrads& grads, double lr) {
  if (lr < 0.0) throw Error("adamw_step: negative learning rate");
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  detail::adamw_update(params.weight, grads.weight, state.m.weight, state.v.weight, c, lr, bc1, bc2);
  if (params.bias && grads.bias) detail::adamw_update(*params.bias, *grads.bias, *state.m.bias, *state.v.bias, c, lr, bc1, bc2);
}

struct ScheduleConfig {
  std::size_t warmup_steps = 500;
  std::size_t total_steps = 0;
  double base_lr = 3e-4;
  double min_lr = 0.0;

  void validate() const {
    if (warmup_steps > total_steps) throw Error("schedule: warmup_steps exceeds total_steps");
    if (min_lr < 0.0 || min_lr > base_lr) throw Error("schedule: need 0 <= min_lr <= base_lr");
  }
};

/// Linear warmup 0 -> base_lr, then cosine decay to min_lr at total_steps.
inline double cosine_lr(std::size_t step, const ScheduleConfig& cfg) {
  if (step < cfg.warmup_steps) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  const std::size_t span = cfg.total_steps - cfg.warmup_steps;
  if (span == 0) return cfg.base_lr;
  const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span));
  return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace protsent
