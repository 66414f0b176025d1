#pragma once

// Synthetic causally-coupled corpus.
//
// Each clip carries a scalar event process (an external traffic event with a
// type and an onset step). External features are a fixed random linear
// projection of the event state plus noise, one projection per view, the
// views sharing a common component. The driver skeleton sits at a rest pose
// and reacts `reaction_lag` steps after onset: an impulse on the arm/head
// group drives damped second-order motion (velocity decays by `damping` per
// step, stops below `stop_speed`). Internal features are a fixed random
// projection of the skeleton displacement plus noise.
//
// Traffic labels (TCR, VCR) are functions of the event process only; driver
// labels (DBR, DER) are functions of the skeleton regime (posture class and
// reaction class) only.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/data/split.hpp"
#include "driver_wm/decoders/topology.hpp"
#include "driver_wm/kv_text.hpp"
#include "driver_wm/numerics/rng.hpp"
#include "driver_wm/numerics/tensor.hpp"

namespace dwm {

struct SynthConfig {
  CorpusDims dims{};
  std::size_t num_train = 256;
  std::size_t num_val = 32;
  std::size_t num_test = 64;
  double event_rate = 0.6;
  std::uint32_t reaction_lag = 2;
  std::uint32_t onset_min = 2;  // 1-based step of the earliest onset
  std::uint32_t onset_max = 5;  // latest onset; 0 means T_obs
  double high_motion_fraction = 0.35;  // share of event clips with large impulses
  double impulse = 0.025;
  double high_impulse = 0.07;
  double damping = 0.6;
  double stiffness = 0.0;
  double stop_speed = 0.002;
  double coord_noise = 0.001;
  double feature_noise = 0.05;
  double view_spread = 0.2;
  double occlusion = 0.05;
  double internal_scale = 10.0;
  FrameSize frame{};

  std::size_t num_clips() const { return num_train + num_val + num_test; }

  void validate() const {
    dims.validate();
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(event_rate)) fail(ErrorCode::kInvalidConfig, "event_rate must lie in [0,1]");
    if (!in01(high_motion_fraction)) fail(ErrorCode::kInvalidConfig, "high_motion_fraction must lie in [0,1]");
    if (!in01(occlusion)) fail(ErrorCode::kInvalidConfig, "occlusion must lie in [0,1]");
    if (!(damping >= 0.0 && damping < 1.0)) fail(ErrorCode::kInvalidConfig, "damping must lie in [0,1)");
    if (coord_noise < 0.0 || feature_noise < 0.0 || view_spread < 0.0 || stiffness < 0.0 || stop_speed < 0.0) {
      fail(ErrorCode::kInvalidConfig, "noise levels, stiffness and stop_speed must be nonnegative");
    }
    if (num_clips() == 0) fail(ErrorCode::kInvalidConfig, "corpus needs at least one clip");
    const std::uint32_t last = onset_max ? onset_max : dims.T_obs;
    if (onset_min < 1 || onset_min > last || last > dims.T) {
      fail(ErrorCode::kInvalidConfig, "onset range must satisfy 1 <= onset_min <= onset_max <= T");
    }
    if (frame.width == 0 || frame.height == 0) fail(ErrorCode::kInvalidConfig, "frame size must be positive");
  }

  KeyValueText to_kv() const {
    KeyValueText kv;
    kv.set("gen.T", dims.T);
    kv.set("gen.T_obs", dims.T_obs);
    kv.set("gen.V", dims.V);
    kv.set("gen.D", dims.D);
    kv.set("gen.K", dims.K);
    kv.set("gen.num_train", static_cast<std::uint64_t>(num_train));
    kv.set("gen.num_val", static_cast<std::uint64_t>(num_val));
    kv.set("gen.num_test", static_cast<std::uint64_t>(num_test));
    kv.set("gen.event_rate", event_rate);
    kv.set("gen.reaction_lag", reaction_lag);
    kv.set("gen.onset_min", onset_min);
    kv.set("gen.onset_max", onset_max);
    kv.set("gen.high_motion_fraction", high_motion_fraction);
    kv.set("gen.impulse", impulse);
    kv.set("gen.high_impulse", high_impulse);
    kv.set("gen.damping", damping);
    kv.set("gen.stiffness", stiffness);
    kv.set("gen.stop_speed", stop_speed);
    kv.set("gen.coord_noise", coord_noise);
    kv.set("gen.feature_noise", feature_noise);
    kv.set("gen.view_spread", view_spread);
    kv.set("gen.occlusion", occlusion);
    kv.set("gen.internal_scale", internal_scale);
    kv.set("gen.frame_width", frame.width);
    kv.set("gen.frame_height", frame.height);
    return kv;
  }

  static SynthConfig from_kv(const KeyValueText& kv) {
    SynthConfig c;
    auto u32 = [&](const char* k, std::uint32_t& dst) {
      if (kv.has(k)) dst = static_cast<std::uint32_t>(kv.get_u64(k));
    };
    auto sz = [&](const char* k, std::size_t& dst) {
      if (kv.has(k)) dst = static_cast<std::size_t>(kv.get_u64(k));
    };
    auto dbl = [&](const char* k, double& dst) {
      if (kv.has(k)) dst = kv.get_double(k);
    };
    u32("gen.T", c.dims.T);
    u32("gen.T_obs", c.dims.T_obs);
    u32("gen.V", c.dims.V);
    u32("gen.D", c.dims.D);
    u32("gen.K", c.dims.K);
    sz("gen.num_train", c.num_train);
    sz("gen.num_val", c.num_val);
    sz("gen.num_test", c.num_test);
    dbl("gen.event_rate", c.event_rate);
    u32("gen.reaction_lag", c.reaction_lag);
    u32("gen.onset_min", c.onset_min);
    u32("gen.onset_max", c.onset_max);
    dbl("gen.high_motion_fraction", c.high_motion_fraction);
    dbl("gen.impulse", c.impulse);
    dbl("gen.high_impulse", c.high_impulse);
    dbl("gen.damping", c.damping);
    dbl("gen.stiffness", c.stiffness);
    dbl("gen.stop_speed", c.stop_speed);
    dbl("gen.coord_noise", c.coord_noise);
    dbl("gen.feature_noise", c.feature_noise);
    dbl("gen.view_spread", c.view_spread);
    dbl("gen.occlusion", c.occlusion);
    dbl("gen.internal_scale", c.internal_scale);
    u32("gen.frame_width", c.frame.width);
    u32("gen.frame_height", c.frame.height);
    return c;
  }

  std::string hash() const {
    const std::string text = to_kv().str();
    return hex64(fnv1a(text.data(), text.size()));
  }
};

/// Ground truth behind one generated clip; not stored in the corpus file.
struct ClipTruth {
  bool has_event = false;
  std::uint32_t event_type = 0;  // 0 = braking lead vehicle, 1 = cut-in
  std::uint32_t onset = 0;        // 1-based
  std::uint32_t reaction_step = 0;  // 1-based, onset + lag
  bool high_motion = false;
  std::uint32_t maneuver = 0;
  std::uint32_t posture = 0;
};

/// Forces the event process of a clip (used to probe the generator).
struct EventOverride {
  bool has_event = true;
  std::uint32_t event_type = 0;
  std::uint32_t onset = 1;
  bool high_motion = false;
};

inline constexpr std::size_t kEventStateDim = 10;

/// Fixed random projections shared by all clips of a corpus.
struct SynthProjections {
  Tensor internal;               // D x 2K
  Tensor common;                 // D x S
  std::vector<Tensor> per_view;  // V of D x S
  std::vector<double> rest_pose; // 2K canonical rest pose

  static SynthProjections make(const SynthConfig& cfg, const SkeletonTopology& topo, std::uint64_t seed) {
    const std::size_t D = cfg.dims.D, K = cfg.dims.K, V = cfg.dims.V;
    Rng rng(mix_seed(seed, hash_key("projections")));
    SynthProjections p;
    p.internal = Tensor::matrix(D, 2 * K);
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(2 * K));
    for (auto& v : p.internal.storage()) v = rng.normal() * in_scale * 4.0;
    p.common = Tensor::matrix(D, kEventStateDim);
    for (auto& v : p.common.storage()) v = rng.normal() * 0.5;
    for (std::size_t view = 0; view < V; ++view) {
      Tensor t = p.common;
      for (auto& v : t.storage()) v += cfg.view_spread * rng.normal() * 0.5;
      p.per_view.push_back(std::move(t));
    }
    p.rest_pose = default_rest_pose(topo, K, rng);
    return p;
  }

  static std::vector<double> default_rest_pose(const SkeletonTopology& topo, std::size_t K, Rng& rng) {
    if (K == 17 && topo.num_joints == 17) {
      // Seated driver seen from the cabin camera.
      return {0.50, 0.25, 0.48, 0.23, 0.52, 0.23, 0.46, 0.24, 0.54, 0.24, 0.42, 0.36,
              0.58, 0.36, 0.38, 0.48, 0.62, 0.48, 0.42, 0.56, 0.58, 0.56, 0.44, 0.64,
              0.56, 0.64, 0.42, 0.78, 0.58, 0.78, 0.42, 0.92, 0.58, 0.92};
    }
    std::vector<double> pose(2 * K);
    for (auto& v : pose) v = rng.uniform(0.3, 0.7);
    return pose;
  }
};

namespace detail {

/// Per-joint reaction weight and direction for an event type.
inline std::array<double, 2> reaction_direction(const SkeletonTopology& topo, std::size_t k,
                                                std::uint32_t event_type) {
  const bool hand = std::find(topo.hand_joints.begin(), topo.hand_joints.end(), k) != topo.hand_joints.end();
  const bool head = std::find(topo.head_joints.begin(), topo.head_joints.end(), k) != topo.head_joints.end();
  bool arm = false;
  for (auto h : topo.hand_joints) {
    for (auto n : topo.neighbors(h)) arm = arm || n == k;
  }
  const double w = hand ? 1.0 : (arm ? 0.5 : (head ? 0.3 : 0.0));
  if (event_type == 0) return {0.0, -w};  // brace: hands and head pulled up
  return {w, 0.0};                        // steer: sideways
}

inline std::uint8_t driver_behaviour(std::uint32_t posture, bool reacted, bool high, std::uint32_t event_type) {
  if (!reacted) return posture == 4 ? 6 : (posture == 3 ? 4 : 0);
  if (event_type == 0) return high ? 2 : 3;
  return high ? 5 : 1;
}

}  // namespace detail

/// Generates a single clip. `index` names the clip; all randomness comes from
/// sub-seeds of `seed`, with separate streams for the event process, noise,
/// occlusion and features so that overriding the event leaves the noise
/// untouched.
inline std::pair<Clip, ClipTruth> synth_clip(const SynthConfig& cfg, const SkeletonTopology& topo,
                                             const SynthProjections& proj, std::uint64_t seed, std::size_t index,
                                             const std::optional<EventOverride>& forced = std::nullopt) {
  const auto& dims = cfg.dims;
  const std::size_t T = dims.T, K = dims.K, D = dims.D, V = dims.V;
  const std::uint64_t clip_seed = mix_seed(seed, index);
  Rng ev(mix_seed(clip_seed, 1));
  Rng noise(mix_seed(clip_seed, 2));
  Rng occl(mix_seed(clip_seed, 3));
  Rng feat(mix_seed(clip_seed, 4));

  ClipTruth truth;
  truth.has_event = ev.bernoulli(cfg.event_rate);
  truth.event_type = static_cast<std::uint32_t>(ev.below(2));
  const std::uint32_t last = cfg.onset_max ? cfg.onset_max : dims.T_obs;
  truth.onset = cfg.onset_min + static_cast<std::uint32_t>(ev.below(last - cfg.onset_min + 1));
  truth.high_motion = ev.bernoulli(cfg.high_motion_fraction);
  truth.maneuver = static_cast<std::uint32_t>(ev.below(5));
  truth.posture = static_cast<std::uint32_t>(ev.below(5));
  if (forced) {
    truth.has_event = forced->has_event;
    truth.event_type = forced->event_type;
    truth.onset = forced->onset;
    truth.high_motion = forced->high_motion;
  }
  if (!truth.has_event) {
    truth.high_motion = false;
    truth.onset = 0;
  }
  truth.reaction_step = truth.has_event ? truth.onset + cfg.reaction_lag : 0;

  Clip clip;
  clip.id = clip_id(index);
  clip.dims = dims;
  clip.frame = cfg.frame;
  clip.coords.resize(T * K * 2);
  clip.mask.resize(T * K);
  clip.internal.resize(T * D);
  clip.external.resize(T * V * D);

  // Damped second-order response of the reaction amplitude.
  std::vector<double> amplitude(T + 1, 0.0);
  double u = 0.0, vel = 0.0;
  const double kick = truth.high_motion ? cfg.high_impulse : cfg.impulse;
  bool reacted = false;
  for (std::uint32_t t = 2; t <= T; ++t) {
    const double a = (truth.has_event && t == truth.reaction_step) ? kick : 0.0;
    vel = cfg.damping * vel - cfg.stiffness * u + a;
    if (a == 0.0 && std::abs(vel) < cfg.stop_speed) vel = 0.0;
    u += vel;
    amplitude[t] = u;
    reacted = reacted || a != 0.0;
  }

  const double posture_shift = (static_cast<double>(truth.posture) - 2.0) * 0.015;
  std::vector<double> disp(2 * K);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      const auto dir = detail::reaction_direction(topo, k, truth.event_type);
      const double px = proj.rest_pose[2 * k] + posture_shift + amplitude[t + 1] * dir[0];
      const double py = proj.rest_pose[2 * k + 1] + 0.5 * std::abs(posture_shift) + amplitude[t + 1] * dir[1];
      const double x = std::clamp(px + cfg.coord_noise * noise.normal(), 0.005, 0.995);
      const double y = std::clamp(py + cfg.coord_noise * noise.normal(), 0.005, 0.995);
      clip.coords[(t * K + k) * 2] = static_cast<float>(x);
      clip.coords[(t * K + k) * 2 + 1] = static_cast<float>(y);
      clip.mask[t * K + k] = occl.bernoulli(cfg.occlusion) ? 0 : 1;
      disp[2 * k] = (x - proj.rest_pose[2 * k]) * cfg.internal_scale;
      disp[2 * k + 1] = (y - proj.rest_pose[2 * k + 1]) * cfg.internal_scale;
    }
    for (std::size_t d = 0; d < D; ++d) {
      double s = 0.0;
      for (std::size_t j = 0; j < 2 * K; ++j) s += proj.internal(d, j) * disp[j];
      clip.internal[t * D + d] = static_cast<float>(s + cfg.feature_noise * feat.normal());
    }

    // Event state: bias, active flag, ramp since onset, type, maneuver.
    std::array<double, kEventStateDim> state{};
    const std::uint32_t step = static_cast<std::uint32_t>(t + 1);
    const bool active = truth.has_event && step >= truth.onset;
    state[0] = 1.0;
    state[1] = active ? 1.0 : 0.0;
    state[2] = active ? std::min(1.0, (step - truth.onset) / 4.0) : 0.0;
    state[3] = (active && truth.event_type == 0) ? 1.0 : 0.0;
    state[4] = (active && truth.event_type == 1) ? 1.0 : 0.0;
    state[5 + truth.maneuver] = 1.0;
    for (std::size_t v = 0; v < V; ++v) {
      for (std::size_t d = 0; d < D; ++d) {
        double s = 0.0;
        for (std::size_t j = 0; j < kEventStateDim; ++j) s += proj.per_view[v](d, j) * state[j];
        clip.external[(t * V + v) * D + d] = static_cast<float>(s + cfg.feature_noise * feat.normal());
      }
    }
  }

  clip.labels.tcr = truth.has_event ? static_cast<std::uint8_t>(1 + truth.event_type) : 0;
  clip.labels.vcr = static_cast<std::uint8_t>(truth.maneuver);
  clip.labels.der = static_cast<std::uint8_t>(truth.posture);
  clip.labels.dbr = detail::driver_behaviour(truth.posture, reacted, truth.high_motion, truth.event_type);
  return {std::move(clip), truth};
}

struct SynthCorpus {
  Corpus corpus;
  std::vector<ClipTruth> truths;  // aligned with corpus.clips
};

inline SynthCorpus synth_generate_corpus(const SynthConfig& cfg, std::uint64_t seed,
                                         const SkeletonTopology& topo = toy_body_topology(), std::size_t lanes = 1) {
  cfg.validate();
  topo.validate();
  if (topo.num_joints != cfg.dims.K) {
    fail(ErrorCode::kInvalidConfig, "topology has " + std::to_string(topo.num_joints) + " joints, K=" +
                                        std::to_string(cfg.dims.K));
  }
  const SynthProjections proj = SynthProjections::make(cfg, topo, seed);
  const std::size_t n = cfg.num_clips();
  SynthCorpus out;
  out.corpus.dims = cfg.dims;
  out.corpus.clips.resize(n);
  out.truths.resize(n);
  auto work = [&](std::size_t lane, std::size_t stride) {
    for (std::size_t i = lane; i < n; i += stride) {
      auto [clip, truth] = synth_clip(cfg, topo, proj, seed, i);
      out.corpus.clips[i] = std::move(clip);
      out.truths[i] = truth;
    }
  };
  lanes = std::max<std::size_t>(1, std::min(lanes, n));
  if (lanes == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t l = 0; l < lanes; ++l) pool.emplace_back(work, l, lanes);
    for (auto& th : pool) th.join();
  }
  const double total = static_cast<double>(n);
  out.corpus.manifest = split_corpus(out.corpus.clips,
                                     {cfg.num_train / total, cfg.num_val / total, cfg.num_test / total},
                                     seed);
  out.corpus.manifest.generator_config_hash = cfg.hash();
  out.corpus.manifest.corpus_id = "synth-" + cfg.hash().substr(0, 8) + "-seed" + std::to_string(seed);
  return out;
}

}  // namespace dwm
