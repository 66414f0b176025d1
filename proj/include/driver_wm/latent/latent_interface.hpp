#pragma once

#include <optional>
#include <string>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/numerics/autodiff.hpp"
#include "driver_wm/numerics/nn.hpp"
#include "driver_wm/numerics/parameter_set.hpp"

namespace dwm {

/// View 0 is the in-cabin camera, views 1..V the external cameras.
using ViewId = std::size_t;
inline constexpr ViewId kInCabinView = 0;

inline std::string view_param_name(ViewId view) {
  return view == kInCabinView ? std::string("view.in") : "view.ext" + std::to_string(view);
}

/// One zero-initialized D-vector per declared view.
inline void add_view_embeddings(ParameterSet& params, std::size_t num_external_views, std::size_t dim) {
  for (ViewId v = 0; v <= num_external_views; ++v) params.add(view_param_name(v), Tensor::matrix(1, dim));
}

inline void require_view(const ParamView& params, ViewId view) {
  if (!params.contains(view_param_name(view))) fail(ErrorCode::kUnknownView, "view id " + std::to_string(view));
}

/// f + e_view(view), row-wise over f (n x D).
inline ad::Var apply_view_embedding(const ad::Var& f, ViewId view, const ParamView& params) {
  require_view(params, view);
  const ad::Var& e = params(view_param_name(view));
  if (e.cols() != f.cols()) {
    fail(ErrorCode::kShapeMismatch, "feature width " + std::to_string(f.cols()) + " vs embedding " +
                                        std::to_string(e.cols()));
  }
  return ad::add(f, e);
}

inline Tensor apply_view_embedding(const Tensor& f, ViewId view, const ParameterSet& params) {
  return apply_view_embedding(ad::constant(f), view, ParamView(params, false)).value();
}

/// Arithmetic mean over the view axis of a list of equally shaped latents.
inline ad::Var pool_external_views(const std::vector<ad::Var>& views) {
  if (views.empty()) fail(ErrorCode::kEmptyInput, "pooling over zero external views");
  ad::Var acc = views[0];
  for (std::size_t v = 1; v < views.size(); ++v) acc = ad::add(acc, views[v]);
  return ad::scale(acc, 1.0 / static_cast<double>(views.size()));
}

/// V x D -> 1 x D.
inline Tensor pool_external_views(const Tensor& stacked) {
  if (stacked.rows() == 0) fail(ErrorCode::kEmptyInput, "pooling over zero external views");
  return ad::mean_rows(ad::constant(stacked)).value();
}

/// Per-step latent states of a clip, stacked over time.
struct LatentSequence {
  ad::Var internal;                 // T x D
  std::vector<ad::Var> external;    // per used view, T x D
  ad::Var external_pooled;          // T x D
};

inline Tensor internal_features(const Clip& clip) {
  Tensor t = Tensor::matrix(clip.dims.T, clip.dims.D);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = clip.internal[i];
  return t;
}

inline Tensor external_features(const Clip& clip, std::size_t view_index) {
  const std::size_t T = clip.dims.T, D = clip.dims.D;
  Tensor t = Tensor::matrix(T, D);
  for (std::size_t s = 0; s < T; ++s)
    for (std::size_t d = 0; d < D; ++d) t(s, d) = clip.external_at(s, view_index, d);
  return t;
}

/// Identity interface: z_int = f_in + e(in), z_ext_v = f_out_v + e(v), pooled
/// by mean over the external views kept in `views` (all when empty).
inline LatentSequence build_latent_states(const Clip& clip, const ParamView& params,
                                          const std::vector<ViewId>& views = {}) {
  const std::size_t D = clip.dims.D;
  if (params(view_param_name(kInCabinView)).cols() != D) {
    fail(ErrorCode::kShapeMismatch, "clip D=" + std::to_string(D) + " vs embedding width " +
                                        std::to_string(params(view_param_name(kInCabinView)).cols()));
  }
  LatentSequence seq;
  seq.internal = apply_view_embedding(ad::constant(internal_features(clip)), kInCabinView, params);
  std::vector<ViewId> used = views;
  if (used.empty()) {
    for (ViewId v = 1; v <= clip.dims.V; ++v) used.push_back(v);
  }
  for (ViewId v : used) {
    if (v == kInCabinView || v > clip.dims.V) fail(ErrorCode::kUnknownView, "external view id " + std::to_string(v));
    seq.external.push_back(apply_view_embedding(ad::constant(external_features(clip, v - 1)), v, params));
  }
  seq.external_pooled = pool_external_views(seq.external);
  return seq;
}

}  // namespace dwm
