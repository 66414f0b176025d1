#pragma once

#include <cmath>
#include <numbers>

#include "driver_wm/error.hpp"
#include "driver_wm/numerics/parameter_set.hpp"

namespace dwm {

struct AdamWConfig {
  double lr = 2e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const {
    if (!(lr > 0.0)) fail(ErrorCode::kInvalidConfig, "learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      fail(ErrorCode::kInvalidConfig, "adam betas must lie in [0,1)");
    }
    if (!(eps > 0.0) || !(weight_decay >= 0.0)) fail(ErrorCode::kInvalidConfig, "adam eps/weight decay");
  }
};

/// First and second moments, shaped like the parameters.
struct AdamState {
  ParameterSet m;
  ParameterSet v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParameterSet& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

/// base_lr * (1 + cos(pi * step / total)) / 2; base_lr when total is 0.
inline double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr) {
  if (total_steps == 0) return base_lr;
  if (step > total_steps) fail(ErrorCode::kInvalidConfig, "cosine schedule step beyond total");
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_global_norm(ParameterSet& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& e : grads.entries()) {
    for (double g : e.value.storage()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& e : grads.entries()) {
      for (double& g : e.value.storage()) g *= s;
    }
  }
  return norm;
}

/// One decoupled-decay Adam step at learning rate `lr`:
///   p <- p - lr * (wd * p + mhat / (sqrt(vhat) + eps)).
/// Frozen entries are skipped.
inline void adamw_step(ParameterSet& params, const ParameterSet& grads, AdamState& state, double lr,
                       const AdamWConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    fail(ErrorCode::kShapeMismatch, "adam: parameter, gradient and moment sets differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = grads.entries()[i];
    if (!g.value.all_finite()) fail(ErrorCode::kNonFinite, "non-finite gradient for '" + g.name + "'");
    if (!g.value.same_shape(params.entries()[i].value)) {
      fail(ErrorCode::kShapeMismatch, "gradient shape for '" + g.name + "'");
    }
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.entries()[i];
    if (!p.trainable) continue;
    const auto& g = grads.entries()[i].value.storage();
    auto& m = state.m.entries()[i].value.storage();
    auto& v = state.v.entries()[i].value.storage();
    auto& w = p.value.storage();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= lr * (cfg.weight_decay * w[j] + mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace dwm
