#pragma once

#include <algorithm>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/dynamics/rollout.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/interventions/spec.hpp"
#include "driver_wm/latent/latent_interface.hpp"

namespace dwm {

/// Latents handed to the rollout after an intervention, plus the injection
/// mode it implies.
struct EditedLatents {
  ad::Var internal;          // T x D, never edited
  ad::Var external_pooled;   // T x D
  InjectionOverride injection;
};

/// Row t <- row max(t - k, 0).
inline ad::Var shift_rows(const ad::Var& x, std::size_t k) {
  if (k == 0) return x;
  std::vector<ad::Var> rows;
  for (std::size_t t = 0; t < x.rows(); ++t) rows.push_back(ad::row(x, t >= k ? t - k : 0));
  return ad::concat_rows(rows);
}

/// `swap_source` supplies the external stream for kExtSwapClip.
inline EditedLatents apply_intervention(const Clip& clip, const InterventionSpec& spec, const ParamView& params,
                                        const Clip* swap_source = nullptr) {
  spec.validate();
  EditedLatents out;
  switch (spec.kind) {
    case InterventionKind::kExtDropView: {
      if (clip.dims.V < 2) fail(ErrorCode::kInvalidConfig, "cannot drop the only external view");
      if (spec.view > clip.dims.V) fail(ErrorCode::kUnknownView, "drop_view " + std::to_string(spec.view));
      std::vector<ViewId> keep;
      for (ViewId v = 1; v <= clip.dims.V; ++v) {
        if (v != spec.view) keep.push_back(v);
      }
      const LatentSequence seq = build_latent_states(clip, params, keep);
      out.internal = seq.internal;
      out.external_pooled = seq.external_pooled;
      return out;
    }
    case InterventionKind::kExtSwapClip: {
      if (swap_source == nullptr) fail(ErrorCode::kNotFound, "swap_clip needs a source clip");
      if (!(swap_source->dims == clip.dims)) fail(ErrorCode::kShapeMismatch, "swap source dims differ");
      out.internal = build_latent_states(clip, params).internal;
      out.external_pooled = build_latent_states(*swap_source, params).external_pooled;
      return out;
    }
    default: break;
  }
  const LatentSequence seq = build_latent_states(clip, params);
  out.internal = seq.internal;
  out.external_pooled = seq.external_pooled;
  switch (spec.kind) {
    case InterventionKind::kExtRemove:
      out.external_pooled = ad::constant(Tensor::matrix(clip.dims.T, clip.dims.D));
      break;
    case InterventionKind::kExtShift:
      out.external_pooled = shift_rows(seq.external_pooled, spec.shift_default ? clip.dims.T_obs : spec.shift);
      break;
    case InterventionKind::kGateClamp: out.injection = InjectionOverride::gate(spec.value); break;
    case InterventionKind::kLambdaOverride: out.injection = InjectionOverride::lambda(spec.value); break;
    default: break;
  }
  return out;
}

/// Next id in sorted order, wrapping to the first.
inline std::string swap_partner(const std::vector<std::string>& ids, const std::string& id) {
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  auto it = std::upper_bound(sorted.begin(), sorted.end(), id);
  if (sorted.empty()) fail(ErrorCode::kEmptyInput, "no clips to swap with");
  return it == sorted.end() ? sorted.front() : *it;
}

}  // namespace dwm
