#pragma once

#include "driver_wm/error.hpp"
#include "driver_wm/model/world_model.hpp"

namespace dwm {

/// Model of variant `kind` sharing every non-structural setting of `base`.
inline WorldModel build_variant(VariantKind kind, const ModelConfig& base, std::uint64_t seed) {
  ModelConfig cfg = base;
  cfg.variant = kind;
  if (kind == VariantKind::kKlBottleneck && cfg.weights.beta == 0.0) cfg.weights.beta = kDefaultKlBeta;
  if (kind != VariantKind::kKlBottleneck && cfg.weights.beta > 0.0) {
    fail(ErrorCode::kInvalidConfig, "loss.beta > 0 is only valid for kl_bottleneck, not " + variant_name(kind));
  }
  return WorldModel::create(cfg, seed);
}

}  // namespace dwm
