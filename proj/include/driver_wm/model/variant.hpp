#pragma once

#include <array>
#include <string>

#include "driver_wm/error.hpp"

namespace dwm {

enum class VariantKind {
  kMain,
  kZeroVelocity,
  kStaticPooling,
  kSingleStream,
  kLateFusion,
  kCrossAttnOnly,
  kRssmGru,
  kNoExtContext,
  kNonCausalBidir,
  kNoPoseHead,
  kKlBottleneck,
};

inline constexpr std::array<std::pair<VariantKind, const char*>, 11> kVariantNames = {{
    {VariantKind::kMain, "main"},
    {VariantKind::kZeroVelocity, "zero_velocity"},
    {VariantKind::kStaticPooling, "static_pooling"},
    {VariantKind::kSingleStream, "single_stream"},
    {VariantKind::kLateFusion, "late_fusion"},
    {VariantKind::kCrossAttnOnly, "cross_attn_only"},
    {VariantKind::kRssmGru, "rssm_gru"},
    {VariantKind::kNoExtContext, "no_ext_context"},
    {VariantKind::kNonCausalBidir, "non_causal_bidir"},
    {VariantKind::kNoPoseHead, "no_pose_head"},
    {VariantKind::kKlBottleneck, "kl_bottleneck"},
}};

inline std::string variant_name(VariantKind kind) {
  for (const auto& [k, name] : kVariantNames) {
    if (k == kind) return name;
  }
  return "?";
}

inline VariantKind parse_variant(const std::string& name) {
  for (const auto& [k, n] : kVariantNames) {
    if (name == n) return k;
  }
  fail(ErrorCode::kInvalidConfig, "unknown variant '" + name + "'");
}

inline std::size_t variant_index(VariantKind kind) { return static_cast<std::size_t>(kind); }

/// Structural traits of each variant.
struct VariantTraits {
  bool trainable = true;
  bool pose_head = true;
  bool rollout = true;          // autoregressive rollout (false: static/copy predictors)
  bool external_heads_zero = false;
  bool external_severed = false;
  bool late_fusion = false;
  bool bidirectional = false;
  bool gaussian = false;
};

inline VariantTraits variant_traits(VariantKind kind) {
  VariantTraits t;
  switch (kind) {
    case VariantKind::kZeroVelocity:
      t.trainable = false;
      t.rollout = false;
      break;
    case VariantKind::kStaticPooling: t.rollout = false; break;
    case VariantKind::kSingleStream: t.external_heads_zero = true; break;
    case VariantKind::kLateFusion: t.late_fusion = true; break;
    case VariantKind::kNoExtContext: t.external_severed = true; break;
    case VariantKind::kNonCausalBidir: t.bidirectional = true; break;
    case VariantKind::kNoPoseHead: t.pose_head = false; break;
    case VariantKind::kKlBottleneck: t.gaussian = true; break;
    default: break;
  }
  return t;
}

}  // namespace dwm
