#pragma once

#include "driver_wm/data/clip.hpp"
#include "driver_wm/numerics/tensor.hpp"

namespace dwm {

/// Copy-last-frame forecast: every future row repeats observed step T_obs.
/// Returns T_pred x 2K normalized (x, y) pairs.
inline Tensor zero_velocity_predict(const Clip& clip) {
  const std::size_t T_obs = clip.dims.T_obs, Tf = clip.dims.T_pred(), K = clip.dims.K;
  Tensor s = Tensor::matrix(Tf, 2 * K);
  for (std::size_t p = 0; p < Tf; ++p)
    for (std::size_t k = 0; k < K; ++k) {
      s(p, 2 * k) = clip.x(T_obs - 1, k);
      s(p, 2 * k + 1) = clip.y(T_obs - 1, k);
    }
  return s;
}

}  // namespace dwm
