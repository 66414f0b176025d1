#pragma once

// Skeleton tensors are Tf x 2K with columns (x0, y0, x1, y1, ...); masks are
// Tf x K. Every loss here reads only the rows it is given, so callers pass
// the future window.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/numerics/autodiff.hpp"

namespace dwm {

inline constexpr double kMaskEpsilon = 1e-8;

namespace detail {

/// 2K x K matrix summing the (x, y) pair of each joint.
inline Tensor pair_sum_matrix(std::size_t K) {
  Tensor m = Tensor::matrix(2 * K, K);
  for (std::size_t k = 0; k < K; ++k) {
    m(2 * k, k) = 1.0;
    m(2 * k + 1, k) = 1.0;
  }
  return m;
}

inline void require_skeleton_shapes(const ad::Var& pred, const Tensor& gt, const char* op) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.cols() % 2 != 0) {
    fail(ErrorCode::kShapeMismatch,
         std::string(op) + ": prediction " + pred.value().shape_string() + " vs target " + gt.shape_string());
  }
}

/// (Tf - order) x Tf finite-difference operator.
inline Tensor difference_matrix(std::size_t Tf, int order) {
  const std::size_t n = Tf > static_cast<std::size_t>(order) ? Tf - static_cast<std::size_t>(order) : 0;
  Tensor m = Tensor::matrix(n, Tf);
  for (std::size_t t = 0; t < n; ++t) {
    if (order == 1) {
      m(t, t) = -1.0;
      m(t, t + 1) = 1.0;
    } else {
      m(t, t) = 1.0;
      m(t, t + 1) = -2.0;
      m(t, t + 2) = 1.0;
    }
  }
  return m;
}

}  // namespace detail

/// sum_t sum_k w_tk ||pred_tk - gt_tk||^2, w_tk = mask_tk / (sum_k mask_tk + eps).
inline ad::Var loss_skeleton(const ad::Var& pred, const Tensor& gt, const Tensor& mask, double eps = kMaskEpsilon) {
  detail::require_skeleton_shapes(pred, gt, "skeleton loss");
  const std::size_t Tf = pred.rows(), K = pred.cols() / 2;
  if (mask.rows() != Tf || mask.cols() != K) {
    fail(ErrorCode::kShapeMismatch, "skeleton loss mask " + mask.shape_string() + " for " + std::to_string(Tf) +
                                        " frames of " + std::to_string(K) + " joints");
  }
  Tensor w = Tensor::matrix(Tf, K);
  for (std::size_t t = 0; t < Tf; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += mask(t, k);
    for (std::size_t k = 0; k < K; ++k) w(t, k) = mask(t, k) / (s + eps);
  }
  const ad::Var sq = ad::square(ad::sub(pred, ad::constant(gt)));
  const ad::Var per_joint = ad::matmul(sq, ad::constant(detail::pair_sum_matrix(K)));
  return ad::sum(ad::mul(per_joint, ad::constant(w)));
}

/// Per-frame edge lengths of a skeleton tensor, Tf x |E|.
inline Tensor edge_lengths(const Tensor& s, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  Tensor out = Tensor::matrix(s.rows(), edges.size());
  for (std::size_t t = 0; t < s.rows(); ++t)
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [i, j] = edges[e];
      const double dx = s(t, 2 * i) - s(t, 2 * j), dy = s(t, 2 * i + 1) - s(t, 2 * j + 1);
      out(t, e) = std::sqrt(dx * dx + dy * dy);
    }
  return out;
}

/// sum_t sum_(i,j) | ||pred_i - pred_j|| - ||gt_i - gt_j|| |.
inline ad::Var loss_bone(const ad::Var& pred, const Tensor& gt,
                         const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  detail::require_skeleton_shapes(pred, gt, "bone loss");
  const std::size_t K = pred.cols() / 2, E = edges.size();
  if (E == 0) return ad::scalar(0.0);
  Tensor diff = Tensor::matrix(2 * K, 2 * E);
  Tensor pair = Tensor::matrix(2 * E, E);
  for (std::size_t e = 0; e < E; ++e) {
    const auto [i, j] = edges[e];
    if (i >= K || j >= K) fail(ErrorCode::kInvalidConfig, "bone loss edge outside K=" + std::to_string(K));
    diff(2 * i, 2 * e) += 1.0;
    diff(2 * j, 2 * e) -= 1.0;
    diff(2 * i + 1, 2 * e + 1) += 1.0;
    diff(2 * j + 1, 2 * e + 1) -= 1.0;
    pair(2 * e, e) = 1.0;
    pair(2 * e + 1, e) = 1.0;
  }
  const ad::Var d = ad::matmul(pred, ad::constant(diff));
  const ad::Var len = ad::sqrt(ad::matmul(ad::square(d), ad::constant(pair)));
  return ad::sum(ad::abs(ad::sub(len, ad::constant(edge_lengths(gt, edges)))));
}

struct SmoothLoss {
  ad::Var value;
  bool too_short = false;  // fewer than 2 frames; value is 0
};

/// sum ||D1 pred - D1 gt||^2 + sum ||D2 pred||^2.
inline SmoothLoss loss_smooth(const ad::Var& pred, const Tensor& gt) {
  detail::require_skeleton_shapes(pred, gt, "smooth loss");
  const std::size_t Tf = pred.rows();
  if (Tf < 2) return {ad::scalar(0.0), true};
  const Tensor d1 = detail::difference_matrix(Tf, 1);
  ad::Var first = ad::sum(ad::square(ad::sub(ad::matmul(ad::constant(d1), pred), ad::matmul(ad::constant(d1), ad::constant(gt)))));
  if (Tf < 3) return {first, false};
  const ad::Var second = ad::sum(ad::square(ad::matmul(ad::constant(detail::difference_matrix(Tf, 2)), pred)));
  return {ad::add(first, second), false};
}

struct RoiBounds {
  double x_min = 0.02, x_max = 0.98, y_min = 0.02, y_max = 0.98;

  void validate() const {
    if (!(x_min <= x_max) || !(y_min <= y_max)) fail(ErrorCode::kInvalidConfig, "ROI bounds out of order");
  }
};

/// sum_t sum_{j in J} relu(x - x_max) + relu(x_min - x) + relu(y - y_max) + relu(y_min - y).
inline ad::Var loss_seat(const ad::Var& pred, const RoiBounds& roi, const std::vector<std::size_t>& joints) {
  roi.validate();
  if (joints.empty()) return ad::scalar(0.0);
  const std::size_t K = pred.cols() / 2, J = joints.size();
  Tensor sel_x = Tensor::matrix(2 * K, J), sel_y = Tensor::matrix(2 * K, J);
  for (std::size_t n = 0; n < J; ++n) {
    if (joints[n] >= K) fail(ErrorCode::kInvalidConfig, "ROI joint outside K=" + std::to_string(K));
    sel_x(2 * joints[n], n) = 1.0;
    sel_y(2 * joints[n] + 1, n) = 1.0;
  }
  const ad::Var x = ad::matmul(pred, ad::constant(sel_x));
  const ad::Var y = ad::matmul(pred, ad::constant(sel_y));
  return ad::sum(ad::relu(ad::affine(x, 1.0, -roi.x_max))) + ad::sum(ad::relu(ad::affine(x, -1.0, roi.x_min))) +
         ad::sum(ad::relu(ad::affine(y, 1.0, -roi.y_max))) + ad::sum(ad::relu(ad::affine(y, -1.0, roi.y_min)));
}

enum class LatentLossMode { kDirect, kVelocity };

/// Windows hold T_pred + 1 rows: the last observed step, then the future.
/// direct:   sum_{rows 1..} ||zhat - z||^2
/// velocity: sum ||(zhat_{s+1} - zhat_s) - (z_{s+1} - z_s)||^2
inline ad::Var loss_latent(const ad::Var& zhat_window, const ad::Var& z_window, LatentLossMode mode) {
  if (zhat_window.rows() != z_window.rows() || zhat_window.cols() != z_window.cols() || z_window.rows() < 1) {
    fail(ErrorCode::kShapeMismatch, "latent loss " + zhat_window.value().shape_string() + " vs " +
                                        z_window.value().shape_string());
  }
  const std::size_t n = z_window.rows();
  if (n == 1) return ad::scalar(0.0);
  if (mode == LatentLossMode::kDirect) {
    return ad::sum(ad::square(ad::sub(ad::slice_rows(zhat_window, 1, n), ad::slice_rows(z_window, 1, n))));
  }
  const ad::Var dp = ad::sub(ad::slice_rows(zhat_window, 1, n), ad::slice_rows(zhat_window, 0, n - 1));
  const ad::Var dz = ad::sub(ad::slice_rows(z_window, 1, n), ad::slice_rows(z_window, 0, n - 1));
  return ad::sum(ad::square(ad::sub(dp, dz)));
}

inline ad::Var loss_latent(const ad::Var& zhat_window, const Tensor& z_window, LatentLossMode mode) {
  return loss_latent(zhat_window, ad::constant(z_window), mode);
}

/// Sum of the four softmax cross-entropies (dbr, der, tcr, vcr).
inline ad::Var loss_aux(const std::array<ad::Var, 4>& logits, const LabelSet& labels) {
  const auto y = labels.as_array();
  ad::Var total;
  for (std::size_t t = 0; t < 4; ++t) {
    if (logits[t].cols() != kLabelClasses[t]) {
      fail(ErrorCode::kShapeMismatch, std::string(task_name(t)) + " logits " + logits[t].value().shape_string());
    }
    if (y[t] >= kLabelClasses[t]) {
      fail(ErrorCode::kLabelOutOfRange, std::string(task_name(t)) + " label " + std::to_string(y[t]));
    }
    const ad::Var ce = ad::cross_entropy(logits[t], y[t]);
    total = total.defined() ? ad::add(total, ce) : ce;
  }
  return total;
}

/// 1/2 sum (sigma^2 + (mu - z)^2 - 1 - log sigma^2), parameterized by log sigma.
inline ad::Var loss_kl_log_sigma(const ad::Var& mean, const ad::Var& log_sigma, const ad::Var& z) {
  if (mean.rows() != z.rows() || mean.cols() != z.cols() || log_sigma.rows() != z.rows() ||
      log_sigma.cols() != z.cols()) {
    fail(ErrorCode::kShapeMismatch, "kl loss shapes");
  }
  const ad::Var var = ad::exp(ad::scale(log_sigma, 2.0));
  const ad::Var err = ad::square(ad::sub(mean, z));
  return ad::scale(ad::sum(ad::sub(ad::affine(ad::add(var, err), 1.0, -1.0), ad::scale(log_sigma, 2.0))), 0.5);
}

inline ad::Var loss_kl(const ad::Var& mean, const Tensor& sigma, const Tensor& z) {
  Tensor log_sigma(sigma.shape());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0)) fail(ErrorCode::kInvalidConfig, "kl loss needs sigma > 0");
    log_sigma[i] = std::log(sigma[i]);
  }
  return loss_kl_log_sigma(mean, ad::constant(log_sigma), ad::constant(z));
}

}  // namespace dwm
