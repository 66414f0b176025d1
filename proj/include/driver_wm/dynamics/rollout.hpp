#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "driver_wm/dynamics/core.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/numerics/autodiff.hpp"
#include "driver_wm/numerics/nn.hpp"

namespace dwm {

/// How m_t enters the internal update. kLearned uses the core's own rule.
struct InjectionOverride {
  enum class Kind { kLearned, kGateClamp, kLambda };
  Kind kind = Kind::kLearned;
  double value = 0.0;

  static InjectionOverride learned() { return {}; }
  static InjectionOverride gate(double c) { return {Kind::kGateClamp, c}; }
  static InjectionOverride lambda(double l) { return {Kind::kLambda, l}; }
};

struct RolloutOptions {
  PreEncodeMode pre_encode = PreEncodeMode::kCausal;
  /// Offline reference only: Ctx reads the whole ground-truth external
  /// sequence, including steps after t.
  bool full_external_history = false;
  /// Draw z~ = mu + eps sigma (gaussian transitions, training only).
  Rng* sample_rng = nullptr;
  InjectionOverride injection;
};

/// Tensor snapshot of a rollout. Step-indexed tensors have T rows; the
/// per-prediction tensors have T_pred rows, row p describing the update that
/// produced step T_obs + p + 1. Absent quantities are empty tensors.
struct RolloutTrace {
  Tensor z_int;
  Tensor z_ext;
  Tensor context;
  Tensor gate;
  Tensor candidate;
  Tensor mean;
  Tensor sigma;
  bool causal = true;
  bool learned_gate = true;  // false when the gate row holds an override value
  std::string intervention = "factual";

  friend bool operator==(const RolloutTrace&, const RolloutTrace&) = default;
};

inline double max_abs_diff(const RolloutTrace& a, const RolloutTrace& b) {
  double m = 0.0;
  const std::pair<const Tensor*, const Tensor*> pairs[] = {
      {&a.z_int, &b.z_int}, {&a.z_ext, &b.z_ext}, {&a.context, &b.context}, {&a.gate, &b.gate},
      {&a.candidate, &b.candidate}, {&a.mean, &b.mean}, {&a.sigma, &b.sigma}};
  for (auto [x, y] : pairs) {
    if (!x->same_shape(*y)) return std::numeric_limits<double>::infinity();
    m = std::max(m, max_abs_diff(*x, *y));
  }
  return m;
}

struct RolloutResult {
  std::size_t T_obs = 0;
  std::vector<ad::Var> z_int;  // T entries, 1 x D
  std::vector<ad::Var> z_ext;  // T entries, 1 x D
  std::vector<ad::Var> context, gate, candidate, mean, log_sigma;  // T_pred entries, possibly undefined
  bool causal = true;
  bool learned_gate = true;

  std::size_t T() const { return z_int.size(); }
  std::size_t T_pred() const { return z_int.size() - T_obs; }

  ad::Var internal() const { return ad::concat_rows(z_int); }
  ad::Var external() const { return ad::concat_rows(z_ext); }
  /// Rows T_obs-1 .. T-1: the last observed state followed by the predictions.
  ad::Var internal_window() const {
    return ad::concat_rows(std::vector<ad::Var>(z_int.begin() + static_cast<std::ptrdiff_t>(T_obs) - 1, z_int.end()));
  }
  ad::Var predicted_internal() const {
    return ad::concat_rows(std::vector<ad::Var>(z_int.begin() + static_cast<std::ptrdiff_t>(T_obs), z_int.end()));
  }

  RolloutTrace trace() const {
    auto stack = [](const std::vector<ad::Var>& xs) {
      if (xs.empty() || !xs.front().defined()) return Tensor();
      return ad::concat_rows(xs).value();
    };
    RolloutTrace t;
    t.z_int = stack(z_int);
    t.z_ext = stack(z_ext);
    t.context = stack(context);
    t.gate = stack(gate);
    t.candidate = stack(candidate);
    t.mean = stack(mean);
    if (!log_sigma.empty() && log_sigma.front().defined()) t.sigma = ad::exp(ad::concat_rows(log_sigma)).value();
    t.causal = causal;
    t.learned_gate = learned_gate;
    return t;
  }
};

/// Closed-loop rollout. Steps 1..T_obs are the ground-truth rows; for
/// t = T_obs..T-1 the histories are truncated to steps <= t (as held by the
/// rollout), m_t is summarized from them, and step t+1 is formed from the
/// candidate f_int(z_int_t), m_t and the gate on z_ext_t. The external stream
/// advances by f_ext. No ground-truth row with index > t enters step t+1
/// unless `full_external_history` is set.
inline RolloutResult rollout(const ad::Var& z_int_gt, const ad::Var& z_ext_gt, std::size_t T_obs,
                             const ParamView& params, const DynamicsConfig& cfg, const RolloutOptions& opts = {}) {
  const std::size_t T = z_int_gt.rows();
  if (z_ext_gt.rows() != T || z_int_gt.cols() != cfg.dim || z_ext_gt.cols() != cfg.dim) {
    fail(ErrorCode::kShapeMismatch, "rollout latents " + z_int_gt.value().shape_string() + " / " +
                                        z_ext_gt.value().shape_string() + " for D=" + std::to_string(cfg.dim));
  }
  if (T_obs < 1 || T_obs > T) fail(ErrorCode::kInvalidConfig, "rollout needs 1 <= T_obs <= T");
  if (opts.injection.kind == InjectionOverride::Kind::kGateClamp &&
      !(opts.injection.value >= 0.0 && opts.injection.value <= 1.0)) {
    fail(ErrorCode::kInvalidConfig, "gate clamp outside [0,1]");
  }

  RolloutResult res;
  res.T_obs = T_obs;
  res.causal = opts.pre_encode == PreEncodeMode::kCausal && !opts.full_external_history;
  res.learned_gate = opts.injection.kind == InjectionOverride::Kind::kLearned;
  for (std::size_t s = 0; s < T_obs; ++s) {
    res.z_int.push_back(ad::row(z_int_gt, s));
    res.z_ext.push_back(ad::row(z_ext_gt, s));
  }

  for (std::size_t t = T_obs; t < T; ++t) {
    // res.z_*[t-1] is step t (1-based); produce step t+1.
    const ad::Var& z_int_t = res.z_int[t - 1];
    const ad::Var& z_ext_t = res.z_ext[t - 1];

    ad::Var m;
    if (cfg.uses_context()) {
      const ad::Var int_hist = ad::concat_rows(std::vector<ad::Var>(res.z_int.begin(), res.z_int.begin() + static_cast<std::ptrdiff_t>(t)));
      const ad::Var ext_hist = opts.full_external_history
                                   ? z_ext_gt
                                   : ad::concat_rows(std::vector<ad::Var>(res.z_ext.begin(), res.z_ext.begin() + static_cast<std::ptrdiff_t>(t)));
      const ad::Var p_int = causal_pre_encode(params, "pre_int", int_hist, opts.pre_encode, cfg.pre_heads);
      const ad::Var p_ext = causal_pre_encode(params, "pre_ext", ext_hist, opts.pre_encode, cfg.pre_heads);
      m = context_summary(params, cfg, p_int, p_ext);
    }

    ad::Var next, gate, candidate, mean, log_sigma;
    if (cfg.core == CoreKind::kGru) {
      next = gru_update(params, m, z_int_t);
    } else {
      const TransitionOutput tr = internal_transition(params, cfg, z_int_t, opts.sample_rng);
      candidate = tr.candidate;
      mean = tr.mean;
      log_sigma = tr.log_sigma;
      if (!cfg.uses_context()) {
        next = candidate;
      } else if (opts.injection.kind == InjectionOverride::Kind::kLambda) {
        gate = ad::constant(Tensor::matrix(1, cfg.dim, opts.injection.value));
        next = override_update(candidate, m, opts.injection.value);
      } else if (opts.injection.kind == InjectionOverride::Kind::kGateClamp) {
        gate = ad::constant(Tensor::matrix(1, cfg.dim, opts.injection.value));
        next = gated_update(candidate, m, gate);
      } else if (cfg.core == CoreKind::kGated) {
        gate = compute_gate(params, cfg, z_ext_t);
        next = gated_update(candidate, m, gate);
      } else {
        next = ad::add(candidate, m);
      }
    }
    res.z_int.push_back(next);
    res.z_ext.push_back(external_transition(params, cfg, z_ext_t));
    res.context.push_back(m);
    res.gate.push_back(gate);
    res.candidate.push_back(candidate);
    res.mean.push_back(mean);
    res.log_sigma.push_back(log_sigma);
  }
  return res;
}

}  // namespace dwm
