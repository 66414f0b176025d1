#pragma once

#include <array>
#include <string>
#include <vector>

#include "driver_wm/baselines/zero_velocity.hpp"
#include "driver_wm/data/clip.hpp"
#include "driver_wm/decoders/heads.hpp"
#include "driver_wm/decoders/skeleton_decoder.hpp"
#include "driver_wm/decoders/topology.hpp"
#include "driver_wm/dynamics/rollout.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/interventions/apply.hpp"
#include "driver_wm/interventions/spec.hpp"
#include "driver_wm/kv_text.hpp"
#include "driver_wm/latent/latent_interface.hpp"
#include "driver_wm/model/variant.hpp"
#include "driver_wm/objectives/losses.hpp"
#include "driver_wm/objectives/total.hpp"

namespace dwm {

inline constexpr double kDefaultKlBeta = 1e-3;

struct ModelConfig {
  VariantKind variant = VariantKind::kMain;
  CorpusDims dims{};
  std::size_t channels = 16;
  std::size_t graph_layers = 2;
  std::size_t pre_heads = 4;
  std::size_t ctx_queries = 4;
  std::size_t ctx_rank = 0;
  std::size_t ctx_heads = 4;
  SkeletonTopology topology = toy_body_topology();
  LossWeights weights{};
  LatentLossMode latent_mode = LatentLossMode::kDirect;
  RoiBounds roi{};

  /// Defaults for `kind`; the KL variant switches beta on.
  static ModelConfig for_variant(VariantKind kind, CorpusDims dims = {}) {
    ModelConfig c;
    c.variant = kind;
    c.dims = dims;
    if (kind == VariantKind::kKlBottleneck) c.weights.beta = kDefaultKlBeta;
    return c;
  }

  VariantTraits traits() const { return variant_traits(variant); }

  DynamicsConfig dynamics() const {
    DynamicsConfig d;
    d.dim = dims.D;
    d.pre_heads = pre_heads;
    d.ctx_queries = ctx_queries;
    d.ctx_rank = ctx_rank;
    d.ctx_heads = ctx_heads;
    switch (variant) {
      case VariantKind::kSingleStream:
      case VariantKind::kLateFusion: d.core = CoreKind::kInternalOnly; break;
      case VariantKind::kCrossAttnOnly: d.core = CoreKind::kCrossAttnOnly; break;
      case VariantKind::kRssmGru: d.core = CoreKind::kGru; break;
      default: d.core = CoreKind::kGated; break;
    }
    if (traits().gaussian) d.transition = TransitionMode::kGaussian;
    return d;
  }

  DecoderConfig decoder() const {
    return {traits().late_fusion ? 2 * dims.D : dims.D, dims.K, channels, graph_layers};
  }

  void validate() const {
    dims.validate();
    topology.validate();
    if (topology.num_joints != dims.K) {
      fail(ErrorCode::kShapeMismatch, "topology K=" + std::to_string(topology.num_joints) + " vs corpus K=" +
                                          std::to_string(dims.K));
    }
    if (channels == 0) fail(ErrorCode::kInvalidConfig, "decoder channels must be positive");
    weights.validate();
    roi.validate();
    if (traits().rollout) dynamics().validate();
    if (weights.beta > 0.0 && !traits().gaussian) {
      fail(ErrorCode::kInvalidConfig, "loss.beta > 0 needs the kl_bottleneck variant");
    }
  }
};

struct ForwardOptions {
  InterventionSpec intervention{};
  const Clip* swap_source = nullptr;
  Rng* sample_rng = nullptr;  // gaussian sampling, training only
};

struct ForwardResult {
  RolloutResult rollout;       // empty for non-rollout variants
  ad::Var predicted_window;    // (T_pred + 1) x D: last observed internal latent, then predictions
  ad::Var target_window;       // same rows from the factual ground-truth latents
  ad::Var skeleton;            // T_pred x 2K, undefined without a pose head
  std::array<ad::Var, 4> logits;  // dbr, der, tcr, vcr; undefined for zero_velocity
};

/// Ground-truth future skeleton (T_pred x 2K) and confidence mask (T_pred x K).
inline Tensor future_skeleton(const Clip& clip) {
  const std::size_t T_obs = clip.dims.T_obs, Tf = clip.dims.T_pred(), K = clip.dims.K;
  Tensor s = Tensor::matrix(Tf, 2 * K);
  for (std::size_t p = 0; p < Tf; ++p)
    for (std::size_t k = 0; k < K; ++k) {
      s(p, 2 * k) = clip.x(T_obs + p, k);
      s(p, 2 * k + 1) = clip.y(T_obs + p, k);
    }
  return s;
}

inline Tensor future_mask(const Clip& clip) {
  const std::size_t T_obs = clip.dims.T_obs, Tf = clip.dims.T_pred(), K = clip.dims.K;
  Tensor m = Tensor::matrix(Tf, K);
  for (std::size_t p = 0; p < Tf; ++p)
    for (std::size_t k = 0; k < K; ++k) m(p, k) = clip.visible(T_obs + p, k) ? 1.0 : 0.0;
  return m;
}

class WorldModel {
 public:
  WorldModel() = default;

  static WorldModel create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    WorldModel m;
    m.cfg_ = cfg;
    m.adjacency_ = cfg.topology.normalized_adjacency();
    const VariantTraits tr = cfg.traits();
    if (!tr.trainable) return m;
    Rng rng(mix_seed(seed, hash_key("init")));
    const std::size_t D = cfg.dims.D;
    add_view_embeddings(m.params_, cfg.dims.V, D);
    if (tr.rollout) {
      add_dynamics_params(m.params_, cfg.dynamics(), rng);
    } else {
      m.params_.add("pool.w", uniform_init(D, D, D, rng));
      m.params_.add("pool.b", Tensor::matrix(1, D));
    }
    if (tr.pose_head) add_decoder_params(m.params_, cfg.decoder(), rng);
    add_head_params(m.params_, D, rng);
    return m;
  }

  /// Rebinds previously saved parameters; names and shapes must match.
  static WorldModel from_parameters(const ModelConfig& cfg, ParameterSet params) {
    WorldModel m = create(cfg, 0);
    if (m.params_.size() != params.size()) {
      fail(ErrorCode::kHeaderMismatch, "parameter count " + std::to_string(params.size()) + " vs expected " +
                                           std::to_string(m.params_.size()));
    }
    for (const auto& e : m.params_.entries()) {
      if (!params.contains(e.name)) fail(ErrorCode::kHeaderMismatch, "missing parameter " + e.name);
      if (!params.at(e.name).same_shape(e.value)) {
        fail(ErrorCode::kHeaderMismatch, "parameter " + e.name + " shape " + params.at(e.name).shape_string());
      }
    }
    m.params_ = std::move(params);
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }
  const Tensor& adjacency() const { return adjacency_; }

  ForwardResult forward(const ParamView& pv, const Clip& clip, const ForwardOptions& opts = {}) const {
    check_clip(clip);
    const VariantTraits tr = cfg_.traits();
    const std::size_t T_obs = clip.dims.T_obs, Tf = clip.dims.T_pred(), D = clip.dims.D;
    ForwardResult out;

    if (!tr.trainable) {
      out.skeleton = ad::constant(zero_velocity_predict(clip));
      return out;
    }

    const EditedLatents edited = apply_intervention(clip, opts.intervention, pv, opts.swap_source);
    const ad::Var z_int = edited.internal;
    const ad::Var z_ext = tr.external_severed ? ad::constant(Tensor::matrix(clip.dims.T, D)) : edited.external_pooled;
    const ad::Var last_obs = ad::row(z_int, T_obs - 1);
    out.target_window = ad::slice_rows(z_int, T_obs - 1, clip.dims.T);

    ad::Var decoder_input, int_final, ext_final;
    if (!tr.rollout) {
      // Static pooling: one time-averaged latent repeated over the horizon.
      const ad::Var mean_int = ad::mean_rows(ad::slice_rows(z_int, 0, T_obs));
      const ad::Var mean_ext = ad::mean_rows(ad::slice_rows(z_ext, 0, T_obs));
      const ad::Var h = ad::add(mean_int, ad::add(ad::matmul(mean_ext, pv("pool.w")), pv("pool.b")));
      out.predicted_window = ad::concat_rows({last_obs, ad::broadcast_rows(h, Tf)});
      decoder_input = h;
      int_final = h;
      ext_final = mean_ext;
    } else {
      RolloutOptions ro;
      ro.pre_encode = tr.bidirectional ? PreEncodeMode::kBidirectional : PreEncodeMode::kCausal;
      ro.full_external_history = tr.bidirectional;
      ro.sample_rng = opts.sample_rng;
      ro.injection = edited.injection;
      out.rollout = rollout(z_int, z_ext, T_obs, pv, cfg_.dynamics(), ro);
      out.predicted_window = out.rollout.internal_window();
      const ad::Var pred_int = out.rollout.predicted_internal();
      decoder_input = tr.late_fusion
                          ? ad::concat_cols({pred_int, ad::concat_rows(std::vector<ad::Var>(
                                                            out.rollout.z_ext.begin() + static_cast<std::ptrdiff_t>(T_obs),
                                                            out.rollout.z_ext.end()))})
                          : pred_int;
      int_final = out.rollout.z_int.back();
      ext_final = tr.external_heads_zero ? ad::constant(Tensor::matrix(1, D)) : out.rollout.z_ext.back();
    }

    if (tr.pose_head) {
      const ad::Var decoded = decode_skeleton(pv, cfg_.decoder(), decoder_input, adjacency_);
      out.skeleton = tr.rollout ? decoded : ad::broadcast_rows(decoded, Tf);
    }
    out.logits = all_logits(classify_internal(pv, InternalLatent(int_final)),
                            classify_external(pv, ExternalLatent(ext_final)));
    return out;
  }

  /// Unweighted loss terms of one clip under the factual rollout.
  LossTerms loss_terms(const ParamView& pv, const Clip& clip, Rng* sample_rng = nullptr) const {
    if (!cfg_.traits().trainable) fail(ErrorCode::kUnsupported, variant_name(cfg_.variant) + " is not trainable");
    ForwardOptions fo;
    fo.sample_rng = sample_rng;
    const ForwardResult f = forward(pv, clip, fo);
    LossTerms terms;
    terms.latent = loss_latent(f.predicted_window, f.target_window, cfg_.latent_mode);
    terms.aux = loss_aux(f.logits, clip.labels);
    if (f.skeleton.defined()) {
      const Tensor gt = future_skeleton(clip);
      terms.skeleton = loss_skeleton(f.skeleton, gt, future_mask(clip));
      const LossWeights& w = cfg_.weights;
      if (w.phys > 0.0) {
        if (w.bone > 0.0) terms.bone = loss_bone(f.skeleton, gt, cfg_.topology.edges);
        if (w.smooth > 0.0) terms.smooth = loss_smooth(f.skeleton, gt).value;
        if (w.seat > 0.0) terms.seat = loss_seat(f.skeleton, cfg_.roi, cfg_.topology.roi_joints);
      }
    }
    if (cfg_.traits().gaussian && cfg_.weights.beta > 0.0) {
      terms.kl = loss_kl_log_sigma(ad::concat_rows(f.rollout.mean), ad::concat_rows(f.rollout.log_sigma),
                                   ad::slice_rows(f.target_window, 1, f.target_window.rows()));
    }
    return terms;
  }

  LossBreakdown objective(const ParamView& pv, const Clip& clip, Rng* sample_rng = nullptr) const {
    return total_loss(loss_terms(pv, clip, sample_rng), cfg_.weights);
  }

  /// Decoded future skeleton (T_pred x 2K) in inference mode.
  Tensor predict_skeleton(const Clip& clip, const ForwardOptions& opts = {}) const {
    if (!cfg_.traits().pose_head) {
      fail(ErrorCode::kUnsupported, "variant " + variant_name(cfg_.variant) + " has no pose head");
    }
    return forward(ParamView(params_, false), clip, opts).skeleton.value();
  }

  RolloutTrace trace(const Clip& clip, const ForwardOptions& opts = {}) const {
    if (!cfg_.traits().rollout) fail(ErrorCode::kUnsupported, variant_name(cfg_.variant) + " does not roll out");
    RolloutTrace t = forward(ParamView(params_, false), clip, opts).rollout.trace();
    t.intervention = opts.intervention.name();
    return t;
  }

  void check_clip(const Clip& clip) const {
    if (!(clip.dims == cfg_.dims)) {
      fail(ErrorCode::kHeaderMismatch, "clip " + clip.id + " dims (T,T_obs,V,D,K)=(" + std::to_string(clip.dims.T) +
                                           "," + std::to_string(clip.dims.T_obs) + "," + std::to_string(clip.dims.V) +
                                           "," + std::to_string(clip.dims.D) + "," + std::to_string(clip.dims.K) +
                                           ") do not match the model");
    }
  }

 private:
  ModelConfig cfg_;
  ParameterSet params_;
  Tensor adjacency_;
};

/// Mean of per-clip objectives, summed in the given order.
inline LossBreakdown batch_objective(const WorldModel& model, const ParamView& pv, const std::vector<const Clip*>& clips,
                                     Rng* sample_rng = nullptr) {
  if (clips.empty()) fail(ErrorCode::kEmptyInput, "empty batch");
  const double inv = 1.0 / static_cast<double>(clips.size());
  LossBreakdown sum;
  ad::Var total;
  for (const Clip* c : clips) {
    const LossBreakdown b = model.objective(pv, *c, sample_rng);
    total = total.defined() ? ad::add(total, b.total_var) : b.total_var;
    sum.latent += b.latent * inv;
    sum.skeleton += b.skeleton * inv;
    sum.aux += b.aux * inv;
    sum.bone += b.bone * inv;
    sum.smooth += b.smooth * inv;
    sum.seat += b.seat * inv;
    sum.kl += b.kl * inv;
  }
  sum.total_var = ad::scale(total, inv);
  sum.total = sum.total_var.item();
  return sum;
}

}  // namespace dwm
