#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/evaluation/metrics.hpp"
#include "driver_wm/kv_text.hpp"
#include "driver_wm/model/world_model.hpp"
#include "driver_wm/parallel.hpp"

namespace dwm {

inline constexpr double kPckTight = 0.05;
inline constexpr double kPckLoose = 0.10;

/// Everything the report needs from one clip. Aggregates are sums and
/// counts so subsets combine exactly.
struct ClipRecord {
  std::string id;
  double motion = 0.0;
  bool hm = false;
  std::vector<double> err_sum;        // per horizon, px
  std::vector<std::size_t> err_count;  // per horizon, masked joints
  double norm_sum = 0.0;               // sum of 100 * err / diagonal
  std::size_t pck_tight = 0, pck_loose = 0;
  double head_sum = 0.0, hands_sum = 0.0;
  std::size_t head_count = 0, hands_count = 0;
  std::array<int, 4> pred{-1, -1, -1, -1};  // -1 when the variant has no heads
  std::array<int, 4> label{0, 0, 0, 0};
};

struct HeadScores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct SubsetMetrics {
  std::size_t clips = 0;
  std::size_t joints = 0;
  double mpjpe = 0.0;  // pooled over masked joint-steps
  std::vector<double> per_horizon;
  double d_nmpjpe = 0.0;
  double pck_tight = 0.0, pck_loose = 0.0;
  double head_mpjpe = 0.0, hands_mpjpe = 0.0;
  bool semantic = false;
  std::array<HeadScores, 4> heads{};
};

struct MetricsReport {
  std::string variant;
  bool geometric = true;
  SubsetMetrics all, hm;
  HmSubset hm_subset;
  std::vector<ClipRecord> records;
};

struct EvalOptions {
  HmSelection hm{};
  std::size_t lanes = 1;
  bool geometric = true;
};

inline SubsetMetrics aggregate_records(const std::vector<const ClipRecord*>& recs, std::size_t horizons, bool geometric) {
  SubsetMetrics m;
  m.clips = recs.size();
  if (recs.empty()) return m;
  if (geometric) {
    std::vector<double> hs(horizons, 0.0);
    std::vector<std::size_t> hc(horizons, 0);
    double total = 0.0, norm = 0.0, head = 0.0, hands = 0.0;
    std::size_t n = 0, tight = 0, loose = 0, nh = 0, nhands = 0;
    for (const ClipRecord* r : recs) {
      for (std::size_t h = 0; h < horizons; ++h) {
        hs[h] += r->err_sum[h];
        hc[h] += r->err_count[h];
        total += r->err_sum[h];
        n += r->err_count[h];
      }
      norm += r->norm_sum;
      tight += r->pck_tight;
      loose += r->pck_loose;
      head += r->head_sum;
      hands += r->hands_sum;
      nh += r->head_count;
      nhands += r->hands_count;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.joints = n;
    m.mpjpe = n ? total / static_cast<double>(n) : nan;
    for (std::size_t h = 0; h < horizons; ++h) m.per_horizon.push_back(hc[h] ? hs[h] / static_cast<double>(hc[h]) : nan);
    m.d_nmpjpe = n ? norm / static_cast<double>(n) : nan;
    m.pck_tight = n ? 100.0 * static_cast<double>(tight) / static_cast<double>(n) : 0.0;
    m.pck_loose = n ? 100.0 * static_cast<double>(loose) / static_cast<double>(n) : 0.0;
    m.head_mpjpe = nh ? head / static_cast<double>(nh) : nan;
    m.hands_mpjpe = nhands ? hands / static_cast<double>(nhands) : nan;
  }
  m.semantic = recs.front()->pred[0] >= 0;
  if (m.semantic) {
    for (std::size_t t = 0; t < 4; ++t) {
      std::vector<std::size_t> p, y;
      for (const ClipRecord* r : recs) {
        p.push_back(static_cast<std::size_t>(r->pred[t]));
        y.push_back(static_cast<std::size_t>(r->label[t]));
      }
      m.heads[t] = {accuracy(p, y), macro_f1(p, y, kLabelClasses[t])};
    }
  }
  return m;
}

/// Rebuilds the All / HM summaries from per-clip records.
inline void summarize(MetricsReport& report, std::size_t horizons, const HmSelection& sel) {
  std::vector<std::pair<std::string, double>> scores;
  for (const auto& r : report.records) scores.emplace_back(r.id, r.motion);
  report.hm_subset = hm_subset(scores, sel);
  std::vector<const ClipRecord*> all, hm;
  for (auto& r : report.records) {
    r.hm = std::find(report.hm_subset.ids.begin(), report.hm_subset.ids.end(), r.id) != report.hm_subset.ids.end();
    all.push_back(&r);
    if (r.hm) hm.push_back(&r);
  }
  report.all = aggregate_records(all, horizons, report.geometric);
  report.hm = aggregate_records(hm, horizons, report.geometric);
}

inline ClipRecord evaluate_clip(const WorldModel& model, const Clip& clip, bool geometric) {
  const std::size_t Tf = clip.dims.T_pred();
  ClipRecord r;
  r.id = clip.id;
  const Tensor gt = future_skeleton(clip);
  r.motion = motion_score(gt, clip.frame);
  const auto labels = clip.labels.as_array();
  for (std::size_t t = 0; t < 4; ++t) r.label[t] = labels[t];
  const ForwardResult f = model.forward(ParamView(model.params(), false), clip);
  if (f.logits[0].defined()) {
    for (std::size_t t = 0; t < 4; ++t) {
      const Tensor& l = f.logits[t].value();
      std::size_t best = 0;
      for (std::size_t c = 1; c < l.cols(); ++c) {
        if (l(0, c) > l(0, best)) best = c;
      }
      r.pred[t] = static_cast<int>(best);
    }
  }
  if (!geometric) return r;
  const Tensor pred = f.skeleton.value();
  const Tensor mask = future_mask(clip);
  const auto& topo = model.config().topology;
  const double diag = clip.frame.diagonal();
  r.err_sum.assign(Tf, 0.0);
  r.err_count.assign(Tf, 0);
  for (std::size_t p = 0; p < Tf; ++p)
    for (std::size_t k = 0; k < clip.dims.K; ++k) {
      if (mask(p, k) == 0.0) continue;
      const double e = joint_error_px(pred, gt, p, k, clip.frame);
      r.err_sum[p] += e;
      r.err_count[p] += 1;
      r.norm_sum += 100.0 * e / diag;
      r.pck_tight += e <= kPckTight * diag;
      r.pck_loose += e <= kPckLoose * diag;
      if (std::find(topo.head_joints.begin(), topo.head_joints.end(), k) != topo.head_joints.end()) {
        r.head_sum += e;
        ++r.head_count;
      }
      if (std::find(topo.hand_joints.begin(), topo.hand_joints.end(), k) != topo.hand_joints.end()) {
        r.hands_sum += e;
        ++r.hands_count;
      }
    }
  return r;
}

inline MetricsReport evaluate(const WorldModel& model, const std::vector<Clip>& clips, const EvalOptions& opts = {}) {
  if (clips.empty()) fail(ErrorCode::kEmptyInput, "evaluation over zero clips");
  const VariantTraits tr = model.config().traits();
  if (opts.geometric && !tr.pose_head) {
    fail(ErrorCode::kUnsupported, "variant " + variant_name(model.config().variant) +
                                      " has no pose head; geometric metrics are undefined");
  }
  MetricsReport report;
  report.variant = variant_name(model.config().variant);
  report.geometric = opts.geometric;
  report.records.resize(clips.size());
  parallel_for(clips.size(), opts.lanes, [&](std::size_t i) { report.records[i] = evaluate_clip(model, clips[i], opts.geometric); });
  summarize(report, clips.front().dims.T_pred(), opts.hm);
  return report;
}

/// Pooled MPJPE (px) over the given clips.
inline double mean_mpjpe(const WorldModel& model, const std::vector<Clip>& clips, std::size_t lanes = 1) {
  EvalOptions o;
  o.lanes = lanes;
  return evaluate(model, clips, o).all.mpjpe;
}

/// Unweighted mean of the per-horizon MPJPE values (px); empty horizons are skipped.
inline double horizon_mean_mpjpe(const WorldModel& model, const std::vector<Clip>& clips, std::size_t lanes = 1) {
  EvalOptions o;
  o.lanes = lanes;
  const SubsetMetrics m = evaluate(model, clips, o).all;
  double s = 0.0;
  std::size_t n = 0;
  for (double v : m.per_horizon) {
    if (std::isfinite(v)) s += v, ++n;
  }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------- text I/O

inline void subset_to_kv(KeyValueText& kv, const std::string& prefix, const SubsetMetrics& m, bool geometric) {
  kv.set(prefix + ".clips", static_cast<std::uint64_t>(m.clips));
  if (geometric) {
    kv.set(prefix + ".joints", static_cast<std::uint64_t>(m.joints));
    kv.set(prefix + ".mpjpe_px", m.mpjpe);
    for (std::size_t h = 0; h < m.per_horizon.size(); ++h) {
      kv.set(prefix + ".mpjpe_h" + std::to_string(h + 1) + "_px", m.per_horizon[h]);
    }
    kv.set(prefix + ".d_nmpjpe_pct", m.d_nmpjpe);
    kv.set(prefix + ".pck05_pct", m.pck_tight);
    kv.set(prefix + ".pck10_pct", m.pck_loose);
    kv.set(prefix + ".head_mpjpe_px", m.head_mpjpe);
    kv.set(prefix + ".hands_mpjpe_px", m.hands_mpjpe);
  }
  if (m.semantic) {
    for (std::size_t t = 0; t < 4; ++t) {
      kv.set(prefix + "." + task_name(t) + ".accuracy_pct", m.heads[t].accuracy);
      kv.set(prefix + "." + task_name(t) + ".macro_f1_pct", m.heads[t].macro_f1);
    }
  }
}

inline KeyValueText report_to_kv(const MetricsReport& r) {
  KeyValueText kv;
  kv.set("format", std::string("dwm-metrics-report"));
  kv.set("variant", r.variant);
  kv.set("geometric", r.geometric ? 1 : 0);
  kv.set("hm.threshold_px", r.hm_subset.threshold);
  kv.set("hm.ids", KeyValueText::join_list(r.hm_subset.ids));
  subset_to_kv(kv, "all", r.all, r.geometric);
  subset_to_kv(kv, "hm", r.hm, r.geometric);
  return kv;
}

/// Tab-separated per-clip records, one header line.
inline std::string format_records(const std::vector<ClipRecord>& recs) {
  std::ostringstream out;
  out << "id\tmotion_px\thm\terr_sum_px\terr_count\tnorm_sum\tpck05\tpck10\thead_sum\thead_count\thands_sum\thands_"
         "count\tpred\tlabel\n";
  auto join_d = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + KeyValueText::format_double(v[i]);
    return s;
  };
  auto join_n = [](const auto& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  for (const auto& r : recs) {
    out << r.id << '\t' << KeyValueText::format_double(r.motion) << '\t' << (r.hm ? 1 : 0) << '\t' << join_d(r.err_sum)
        << '\t' << join_n(r.err_count) << '\t' << KeyValueText::format_double(r.norm_sum) << '\t' << r.pck_tight << '\t'
        << r.pck_loose << '\t' << KeyValueText::format_double(r.head_sum) << '\t' << r.head_count << '\t'
        << KeyValueText::format_double(r.hands_sum) << '\t' << r.hands_count << '\t' << join_n(r.pred) << '\t'
        << join_n(r.label) << '\n';
  }
  return out.str();
}

inline std::vector<ClipRecord> parse_records(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<ClipRecord> out;
  bool header = true;
  auto fields = [](const std::string& s, char sep) {
    std::vector<std::string> f;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, sep)) f.push_back(cur);
    if (!s.empty() && s.back() == sep) f.emplace_back();
    return f;
  };
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto f = fields(line, '\t');
    if (f.size() != 14) fail(ErrorCode::kTruncated, "record line has " + std::to_string(f.size()) + " fields");
    ClipRecord r;
    r.id = f[0];
    r.motion = KeyValueText::parse_double("motion", f[1]);
    r.hm = f[2] == "1";
    for (const auto& v : fields(f[3], ',')) r.err_sum.push_back(KeyValueText::parse_double("err_sum", v));
    for (const auto& v : fields(f[4], ',')) r.err_count.push_back(KeyValueText::parse_u64("err_count", v));
    r.norm_sum = KeyValueText::parse_double("norm_sum", f[5]);
    r.pck_tight = KeyValueText::parse_u64("pck05", f[6]);
    r.pck_loose = KeyValueText::parse_u64("pck10", f[7]);
    r.head_sum = KeyValueText::parse_double("head_sum", f[8]);
    r.head_count = KeyValueText::parse_u64("head_count", f[9]);
    r.hands_sum = KeyValueText::parse_double("hands_sum", f[10]);
    r.hands_count = KeyValueText::parse_u64("hands_count", f[11]);
    const auto p = fields(f[12], ','), l = fields(f[13], ',');
    for (std::size_t t = 0; t < 4 && t < p.size(); ++t) r.pred[t] = std::stoi(p[t]);
    for (std::size_t t = 0; t < 4 && t < l.size(); ++t) r.label[t] = std::stoi(l[t]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dwm
