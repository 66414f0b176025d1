#pragma once

#include <utility>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/error.hpp"

namespace dwm {

struct NormalizedPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Pixel -> [0,1] image coordinates. Out-of-frame pixels map outside [0,1];
/// flagging them in the mask is the caller's job.
inline NormalizedPoint normalize_coords(double x_px, double y_px, FrameSize frame) {
  if (frame.width == 0 || frame.height == 0) fail(ErrorCode::kInvalidConfig, "frame size must be positive");
  return {x_px / frame.width, y_px / frame.height};
}

inline std::pair<double, double> denormalize_coords(NormalizedPoint p, FrameSize frame) {
  return {p.x * frame.width, p.y * frame.height};
}

}  // namespace dwm
