#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/evaluation/metrics.hpp"
#include "driver_wm/interventions/apply.hpp"
#include "driver_wm/interventions/spec.hpp"
#include "driver_wm/kv_text.hpp"
#include "driver_wm/model/world_model.hpp"
#include "driver_wm/numerics/rng.hpp"
#include "driver_wm/parallel.hpp"

namespace dwm {

// ------------------------------------------------------------ deviations

/// Mean Euclidean pixel distance between intervened and factual decoded
/// joints, averaged per joint per frame over each subset. Every joint counts
/// regardless of visibility.
struct DeviationReport {
  std::string spec;
  double all = 0.0;
  double hm = 0.0;
  double final_horizon = 0.0;  // last predicted step
  double head = 0.0;
  double hands = 0.0;
  std::vector<double> per_horizon;
};

/// Sums of one clip's deviations; subsets are combined from these.
struct ClipDeviation {
  std::vector<double> per_horizon_sum;  // over all joints
  double head_sum = 0.0, hands_sum = 0.0;
  std::size_t joints = 0, head_joints = 0, hands_joints = 0;
};

inline ClipDeviation clip_deviation(const Tensor& factual, const Tensor& edited, const Clip& clip,
                                    const SkeletonTopology& topo) {
  if (!factual.same_shape(edited)) fail(ErrorCode::kShapeMismatch, "deviation: skeleton shapes differ");
  const std::size_t Tf = factual.rows(), K = clip.dims.K;
  ClipDeviation d;
  d.per_horizon_sum.assign(Tf, 0.0);
  d.joints = K;
  d.head_joints = topo.head_joints.size();
  d.hands_joints = topo.hand_joints.size();
  for (std::size_t p = 0; p < Tf; ++p) {
    for (std::size_t k = 0; k < K; ++k) {
      const double e = joint_error_px(edited, factual, p, k, clip.frame);
      d.per_horizon_sum[p] += e;
      if (std::find(topo.head_joints.begin(), topo.head_joints.end(), k) != topo.head_joints.end()) d.head_sum += e;
      if (std::find(topo.hand_joints.begin(), topo.hand_joints.end(), k) != topo.hand_joints.end()) d.hands_sum += e;
    }
  }
  return d;
}

inline DeviationReport combine_deviations(const std::string& name, const std::vector<ClipDeviation>& devs,
                                          const std::vector<bool>& hm) {
  DeviationReport r;
  r.spec = name;
  if (devs.empty()) return r;
  const std::size_t Tf = devs.front().per_horizon_sum.size();
  std::vector<double> hs(Tf, 0.0);
  double hm_sum = 0.0, head = 0.0, hands = 0.0;
  std::size_t n_clip = 0, n_hm = 0, n_head = 0, n_hands = 0;
  for (std::size_t i = 0; i < devs.size(); ++i) {
    const ClipDeviation& d = devs[i];
    double clip_sum = 0.0;
    for (std::size_t p = 0; p < Tf; ++p) {
      hs[p] += d.per_horizon_sum[p];
      clip_sum += d.per_horizon_sum[p];
    }
    n_clip += d.joints;
    if (hm[i]) {
      hm_sum += clip_sum;
      n_hm += d.joints * Tf;
    }
    head += d.head_sum;
    hands += d.hands_sum;
    n_head += d.head_joints * Tf;
    n_hands += d.hands_joints * Tf;
  }
  double total = 0.0;
  for (std::size_t p = 0; p < Tf; ++p) {
    total += hs[p];
    r.per_horizon.push_back(hs[p] / static_cast<double>(n_clip));
  }
  r.all = total / static_cast<double>(n_clip * Tf);
  r.hm = n_hm ? hm_sum / static_cast<double>(n_hm) : 0.0;
  r.final_horizon = r.per_horizon.back();
  r.head = n_head ? head / static_cast<double>(n_head) : 0.0;
  r.hands = n_hands ? hands / static_cast<double>(n_hands) : 0.0;
  return r;
}

/// The intervention rows of the controlled-intervention table, factual first.
inline std::vector<InterventionSpec> default_intervention_specs() {
  return {InterventionSpec::none(),           InterventionSpec::swap_clip(),     InterventionSpec::remove_external(),
          InterventionSpec::shift_large(),    InterventionSpec::drop_view(1),    InterventionSpec::lambda_override(0.0),
          InterventionSpec::gate_clamp(0.0),  InterventionSpec::lambda_override(1.0), InterventionSpec::gate_clamp(1.0),
          InterventionSpec::lambda_override(2.0)};
}

/// One row per spec. Swap sources are the next clip id in sorted order
/// within `clips`; HM membership follows `hm` on the same clips.
inline std::vector<DeviationReport> deviation_table(const WorldModel& model, const std::vector<Clip>& clips,
                                                    const std::vector<InterventionSpec>& specs, const HmSelection& hm_sel = {},
                                                    std::size_t lanes = 1) {
  if (clips.empty()) fail(ErrorCode::kEmptyInput, "deviation table over zero clips");
  if (!model.config().traits().pose_head) {
    fail(ErrorCode::kUnsupported, "variant " + variant_name(model.config().variant) + " has no pose head");
  }
  for (const auto& s : specs) s.validate();

  std::vector<std::string> ids;
  std::map<std::string, std::size_t> by_id;
  std::vector<std::pair<std::string, double>> scores;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    ids.push_back(clips[i].id);
    by_id[clips[i].id] = i;
    scores.emplace_back(clips[i].id, motion_score(future_skeleton(clips[i]), clips[i].frame));
  }
  const HmSubset subset = hm_subset(scores, hm_sel);
  std::vector<bool> hm(clips.size(), false);
  for (const auto& id : subset.ids) hm[by_id.at(id)] = true;

  std::vector<Tensor> factual(clips.size());
  parallel_for(clips.size(), lanes, [&](std::size_t i) { factual[i] = model.predict_skeleton(clips[i]); });

  std::vector<DeviationReport> out;
  for (const auto& spec : specs) {
    std::vector<ClipDeviation> devs(clips.size());
    parallel_for(clips.size(), lanes, [&](std::size_t i) {
      ForwardOptions fo;
      fo.intervention = spec;
      if (spec.kind == InterventionKind::kExtSwapClip) {
        const std::string src = spec.source_id.empty() ? swap_partner(ids, clips[i].id) : spec.source_id;
        auto it = by_id.find(src);
        if (it == by_id.end()) fail(ErrorCode::kNotFound, "swap source clip '" + src + "'");
        fo.swap_source = &clips[it->second];
      }
      const Tensor edited = spec.kind == InterventionKind::kNone ? factual[i] : model.predict_skeleton(clips[i], fo);
      devs[i] = clip_deviation(factual[i], edited, clips[i], model.config().topology);
    });
    out.push_back(combine_deviations(spec.name(), devs, hm));
  }
  return out;
}

inline KeyValueText deviations_to_kv(const std::vector<DeviationReport>& rows) {
  KeyValueText kv;
  kv.set("format", std::string("dwm-deviation-report"));
  std::vector<std::string> names;
  for (const auto& r : rows) names.push_back(r.spec);
  kv.set("specs", KeyValueText::join_list(names));
  for (const auto& r : rows) {
    const std::string p = "dev." + r.spec;
    kv.set(p + ".all_px", r.all);
    kv.set(p + ".hm_px", r.hm);
    kv.set(p + ".h" + std::to_string(r.per_horizon.size()) + "_px", r.final_horizon);
    kv.set(p + ".head_px", r.head);
    kv.set(p + ".hands_px", r.hands);
    for (std::size_t h = 0; h < r.per_horizon.size(); ++h) {
      kv.set(p + ".horizon" + std::to_string(h + 1) + "_px", r.per_horizon[h]);
    }
  }
  return kv;
}

// -------------------------------------------------------- zero lookahead

enum class SuffixMode { kZero, kRandom };

inline const char* suffix_mode_name(SuffixMode m) { return m == SuffixMode::kZero ? "suffix_zero" : "suffix_random"; }

/// Replaces every input row with time index > T_obs (1-based) with zeros or
/// standard normal noise. The future skeleton is left as is; it is a target,
/// not an input.
inline Clip perturb_suffix(const Clip& clip, SuffixMode mode, std::uint64_t seed) {
  Clip out = clip;
  Rng rng(mix_seed(seed, hash_key(clip.id)));
  const std::size_t D = clip.dims.D, V = clip.dims.V;
  for (std::size_t t = clip.dims.T_obs; t < clip.dims.T; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      out.internal[t * D + d] = mode == SuffixMode::kZero ? 0.0f : static_cast<float>(rng.normal());
    }
    for (std::size_t j = 0; j < V * D; ++j) {
      out.external[t * V * D + j] = mode == SuffixMode::kZero ? 0.0f : static_cast<float>(rng.normal());
    }
  }
  return out;
}

struct LookaheadResult {
  SuffixMode mode = SuffixMode::kZero;
  std::vector<double> max_abs_diff;  // per horizon, on the decoded skeleton tensor
  double worst = 0.0;
  bool pass = true;
};

inline constexpr double kLookaheadTolerance = 1e-6;

/// Perturbs the unobserved suffix of every clip and compares the predicted
/// future skeleton with the factual one, horizon by horizon.
inline LookaheadResult verify_zero_lookahead(const WorldModel& model, const std::vector<Clip>& clips, SuffixMode mode,
                                             std::uint64_t seed, std::size_t lanes = 1) {
  if (clips.empty()) fail(ErrorCode::kEmptyInput, "lookahead check over zero clips");
  const std::size_t Tf = clips.front().dims.T_pred();
  std::vector<std::vector<double>> per_clip(clips.size(), std::vector<double>(Tf, 0.0));
  parallel_for(clips.size(), lanes, [&](std::size_t i) {
    const Tensor a = model.predict_skeleton(clips[i]);
    const Tensor b = model.predict_skeleton(perturb_suffix(clips[i], mode, seed));
    for (std::size_t p = 0; p < Tf; ++p)
      for (std::size_t c = 0; c < a.cols(); ++c) per_clip[i][p] = std::max(per_clip[i][p], std::abs(a(p, c) - b(p, c)));
  });
  LookaheadResult r;
  r.mode = mode;
  r.max_abs_diff.assign(Tf, 0.0);
  for (const auto& v : per_clip)
    for (std::size_t p = 0; p < Tf; ++p) r.max_abs_diff[p] = std::max(r.max_abs_diff[p], v[p]);
  for (double v : r.max_abs_diff) r.worst = std::max(r.worst, v);
  r.pass = r.worst <= kLookaheadTolerance;
  return r;
}

/// Largest difference between two factual inference passes over `clips`.
inline double self_consistency_diff(const WorldModel& model, const std::vector<Clip>& clips, std::size_t lanes = 1) {
  std::vector<double> d(clips.size(), 0.0);
  parallel_for(clips.size(), lanes, [&](std::size_t i) {
    d[i] = max_abs_diff(model.predict_skeleton(clips[i]), model.predict_skeleton(clips[i]));
  });
  return d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
}

// ------------------------------------------------------ injection timing

/// 1-based step of the prediction window with the largest mean gate
/// activation; ties go to the earliest step.
inline std::size_t maximal_injection_step(const RolloutTrace& trace) {
  if (!trace.learned_gate || trace.gate.size() == 0) {
    fail(ErrorCode::kUnsupported, "trace has no learned gate");
  }
  std::size_t best = 0;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < trace.gate.rows(); ++p) {
    double s = 0.0;
    for (std::size_t d = 0; d < trace.gate.cols(); ++d) s += trace.gate(p, d);
    const double mean = s / static_cast<double>(trace.gate.cols());
    if (mean > best_mean) {
      best_mean = mean;
      best = p;
    }
  }
  return best + 1;
}

}  // namespace dwm
