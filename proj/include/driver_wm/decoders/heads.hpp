#pragma once

#include <array>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/numerics/autodiff.hpp"
#include "driver_wm/numerics/nn.hpp"
#include "driver_wm/numerics/parameter_set.hpp"

namespace dwm {

/// Final internal state. Only the driver-side heads accept it.
struct InternalLatent {
  explicit InternalLatent(ad::Var v) : value(std::move(v)) {}
  ad::Var value;
};

/// Final external state. Only the scene-side heads accept it.
struct ExternalLatent {
  explicit ExternalLatent(ad::Var v) : value(std::move(v)) {}
  ad::Var value;
};

struct InternalLogits {
  ad::Var dbr;  // 1 x 7
  ad::Var der;  // 1 x 5
};

struct ExternalLogits {
  ad::Var tcr;  // 1 x 3
  ad::Var vcr;  // 1 x 5
};

inline std::string head_param(std::size_t task, const char* suffix) {
  return std::string("head.") + task_name(task) + "." + suffix;
}

inline void add_head_params(ParameterSet& params, std::size_t dim, Rng& rng) {
  for (std::size_t t = 0; t < kLabelClasses.size(); ++t) {
    params.add(head_param(t, "w"), uniform_init(dim, kLabelClasses[t], dim, rng));
    params.add(head_param(t, "b"), Tensor::matrix(1, kLabelClasses[t]));
  }
}

namespace detail {
inline ad::Var linear_head(const ParamView& params, std::size_t task, const ad::Var& x) {
  return ad::add(ad::matmul(x, params(head_param(task, "w"))), params(head_param(task, "b")));
}
}  // namespace detail

inline InternalLogits classify_internal(const ParamView& params, const InternalLatent& z) {
  return {detail::linear_head(params, 0, z.value), detail::linear_head(params, 1, z.value)};
}

inline ExternalLogits classify_external(const ParamView& params, const ExternalLatent& z) {
  return {detail::linear_head(params, 2, z.value), detail::linear_head(params, 3, z.value)};
}

/// dbr, der, tcr, vcr.
inline std::array<ad::Var, 4> all_logits(const InternalLogits& in, const ExternalLogits& ex) {
  return {in.dbr, in.der, ex.tcr, ex.vcr};
}

}  // namespace dwm
