#pragma once

// Skeleton tensors are T_pred x 2K normalized (x, y); masks T_pred x K.
// Pixel errors denormalize x by W and y by H.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/numerics/tensor.hpp"

namespace dwm {

/// Pixel distance of joint k at row p.
inline double joint_error_px(const Tensor& pred, const Tensor& gt, std::size_t p, std::size_t k, const FrameSize& f) {
  const double dx = (pred(p, 2 * k) - gt(p, 2 * k)) * f.width;
  const double dy = (pred(p, 2 * k + 1) - gt(p, 2 * k + 1)) * f.height;
  return std::sqrt(dx * dx + dy * dy);
}

inline void require_metric_shapes(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
  if (!pred.same_shape(gt) || pred.cols() % 2 != 0 || mask.rows() != pred.rows() || mask.cols() * 2 != pred.cols()) {
    fail(ErrorCode::kShapeMismatch, "metric shapes pred " + pred.shape_string() + ", gt " + gt.shape_string() +
                                        ", mask " + mask.shape_string());
  }
}

struct MpjpeResult {
  std::vector<double> per_horizon;  // NaN where a horizon has no masked joint
  double mean = 0.0;                // pooled over all masked joints
  std::size_t count = 0;
};

inline MpjpeResult mpjpe(const Tensor& pred, const Tensor& gt, const Tensor& mask, const FrameSize& frame) {
  require_metric_shapes(pred, gt, mask);
  MpjpeResult r;
  double total = 0.0;
  for (std::size_t p = 0; p < pred.rows(); ++p) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < mask.cols(); ++k) {
      if (mask(p, k) == 0.0) continue;
      s += joint_error_px(pred, gt, p, k, frame);
      ++n;
    }
    r.per_horizon.push_back(n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN());
    total += s;
    r.count += n;
  }
  if (r.count == 0) fail(ErrorCode::kEmptyInput, "MPJPE over an all-zero mask");
  r.mean = total / static_cast<double>(r.count);
  return r;
}

/// 100 * mpjpe / sqrt(W^2 + H^2).
inline double d_nmpjpe(double mpjpe_px, const FrameSize& frame) {
  if (frame.width == 0 || frame.height == 0) fail(ErrorCode::kInvalidConfig, "frame size must be positive");
  return 100.0 * mpjpe_px / frame.diagonal();
}

/// Percentage of masked joints with error <= fraction * diagonal. 0 when no
/// joint is masked in.
inline double pck(const Tensor& pred, const Tensor& gt, const Tensor& mask, const FrameSize& frame, double fraction) {
  require_metric_shapes(pred, gt, mask);
  if (!(fraction > 0.0)) fail(ErrorCode::kInvalidConfig, "PCK fraction must be positive");
  const double threshold = fraction * frame.diagonal();
  std::size_t hits = 0, n = 0;
  for (std::size_t p = 0; p < pred.rows(); ++p)
    for (std::size_t k = 0; k < mask.cols(); ++k) {
      if (mask(p, k) == 0.0) continue;
      ++n;
      if (joint_error_px(pred, gt, p, k, frame) <= threshold) ++hits;
    }
  return n ? 100.0 * static_cast<double>(hits) / static_cast<double>(n) : 0.0;
}

/// Unweighted mean of per-class F1 in percent. A class with no true and no
/// predicted members scores 0 and still counts.
inline double macro_f1(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                       std::size_t num_classes) {
  if (preds.empty() || preds.size() != labels.size()) fail(ErrorCode::kEmptyInput, "macro F1 needs matched, nonempty inputs");
  if (num_classes == 0) fail(ErrorCode::kInvalidConfig, "macro F1 over zero classes");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= num_classes || labels[i] >= num_classes) fail(ErrorCode::kLabelOutOfRange, "macro F1 class index");
    if (preds[i] == labels[i]) {
      ++tp[preds[i]];
    } else {
      ++fp[preds[i]];
      ++fn[labels[i]];
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  return 100.0 * sum / static_cast<double>(num_classes);
}

inline double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels) {
  if (preds.empty() || preds.size() != labels.size()) fail(ErrorCode::kEmptyInput, "accuracy needs matched, nonempty inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Mean per-joint frame-to-frame pixel displacement over the ground-truth
/// future window (all joints): transitions (t, t+1) for t = T_obs+1 .. T-1.
inline double motion_score(const Tensor& future, const FrameSize& frame) {
  const std::size_t Tf = future.rows(), K = future.cols() / 2;
  if (Tf < 2) fail(ErrorCode::kInvalidConfig, "motion score needs at least two future frames");
  double s = 0.0;
  for (std::size_t p = 0; p + 1 < Tf; ++p)
    for (std::size_t k = 0; k < K; ++k) {
      const double dx = (future(p + 1, 2 * k) - future(p, 2 * k)) * frame.width;
      const double dy = (future(p + 1, 2 * k + 1) - future(p, 2 * k + 1)) * frame.height;
      s += std::sqrt(dx * dx + dy * dy);
    }
  return s / static_cast<double>((Tf - 1) * K);
}

/// Top clips by score: ceil(fraction * N) when `count` is 0, else `count`.
struct HmSelection {
  double fraction = 0.10;
  std::size_t count = 0;

  std::size_t size(std::size_t n) const {
    if (count) return std::min(count, n);
    if (!(fraction >= 0.0 && fraction <= 1.0)) fail(ErrorCode::kInvalidConfig, "HM fraction must lie in [0,1]");
    const double raw = fraction * static_cast<double>(n);
    // Guard against 0.1 * 609 = 60.900000000000006 style representation error.
    const double rounded = std::round(raw);
    const std::size_t c = std::abs(raw - rounded) < 1e-9 ? static_cast<std::size_t>(rounded)
                                                         : static_cast<std::size_t>(std::ceil(raw));
    return std::min(c, n);
  }
};

struct HmSubset {
  std::vector<std::string> ids;  // descending score, ties by id ascending
  double threshold = 0.0;        // score of the last selected clip
};

inline HmSubset hm_subset(std::vector<std::pair<std::string, double>> scores, const HmSelection& sel) {
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  HmSubset out;
  const std::size_t n = sel.size(scores.size());
  for (std::size_t i = 0; i < n; ++i) out.ids.push_back(scores[i].first);
  out.threshold = n ? scores[n - 1].second : 0.0;
  return out;
}

}  // namespace dwm
