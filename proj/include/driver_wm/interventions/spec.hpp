#pragma once

#include <cstdint>
#include <string>

#include "driver_wm/error.hpp"
#include "driver_wm/kv_text.hpp"

namespace dwm {

enum class InterventionKind {
  kNone,
  kExtSwapClip,    // external stream taken from another clip
  kExtRemove,      // external latents set to zero
  kExtShift,       // external sequence delayed by `shift` steps, edge-clamped
  kExtDropView,    // one external view excluded from pooling
  kGateClamp,      // learned gate replaced by a constant c in [0,1]
  kLambdaOverride, // gate bypassed: (1 - lambda) z~ + lambda m
};

/// A do-operator applied to a rollout. External edits act on the whole
/// external history the rollout can see (from step 1); pathway edits change
/// how the injection is mixed.
struct InterventionSpec {
  InterventionKind kind = InterventionKind::kNone;
  std::string source_id;    // kExtSwapClip; empty = next clip id in sorted order
  std::uint32_t shift = 0;  // kExtShift; 0 with `shift_default` means T_obs
  bool shift_default = false;
  std::size_t view = 0;     // kExtDropView, 1-based external view
  double value = 0.0;       // kGateClamp: c, kLambdaOverride: lambda

  static InterventionSpec none() { return {}; }
  static InterventionSpec swap_clip(std::string source = {}) {
    InterventionSpec s;
    s.kind = InterventionKind::kExtSwapClip;
    s.source_id = std::move(source);
    return s;
  }
  static InterventionSpec remove_external() {
    InterventionSpec s;
    s.kind = InterventionKind::kExtRemove;
    return s;
  }
  static InterventionSpec shift_external(std::uint32_t steps) {
    InterventionSpec s;
    s.kind = InterventionKind::kExtShift;
    s.shift = steps;
    return s;
  }
  static InterventionSpec shift_large() {
    InterventionSpec s;
    s.kind = InterventionKind::kExtShift;
    s.shift_default = true;
    return s;
  }
  static InterventionSpec drop_view(std::size_t view) {
    InterventionSpec s;
    s.kind = InterventionKind::kExtDropView;
    s.view = view;
    return s;
  }
  static InterventionSpec gate_clamp(double c) {
    InterventionSpec s;
    s.kind = InterventionKind::kGateClamp;
    s.value = c;
    return s;
  }
  static InterventionSpec lambda_override(double lambda) {
    InterventionSpec s;
    s.kind = InterventionKind::kLambdaOverride;
    s.value = lambda;
    return s;
  }

  bool edits_external() const {
    return kind == InterventionKind::kExtSwapClip || kind == InterventionKind::kExtRemove ||
           kind == InterventionKind::kExtShift || kind == InterventionKind::kExtDropView;
  }
  bool edits_pathway() const {
    return kind == InterventionKind::kGateClamp || kind == InterventionKind::kLambdaOverride;
  }

  void validate() const {
    if (kind == InterventionKind::kGateClamp && !(value >= 0.0 && value <= 1.0)) {
      fail(ErrorCode::kInvalidConfig, "gate clamp must lie in [0,1]");
    }
    if (kind == InterventionKind::kLambdaOverride && !(value >= 0.0)) {
      fail(ErrorCode::kInvalidConfig, "lambda override must be nonnegative");
    }
    if (kind == InterventionKind::kExtDropView && view == 0) {
      fail(ErrorCode::kInvalidConfig, "drop_view takes a 1-based external view id");
    }
  }

  /// Stable name, also accepted by parse().
  std::string name() const {
    switch (kind) {
      case InterventionKind::kNone: return "factual";
      case InterventionKind::kExtSwapClip: return source_id.empty() ? "swap_clip" : "swap_clip:" + source_id;
      case InterventionKind::kExtRemove: return "ext_remove";
      case InterventionKind::kExtShift: return shift_default ? "shift_large" : "shift:" + std::to_string(shift);
      case InterventionKind::kExtDropView: return "drop_view:" + std::to_string(view);
      case InterventionKind::kGateClamp: return "gate:" + KeyValueText::format_double(value);
      case InterventionKind::kLambdaOverride: return "lambda:" + KeyValueText::format_double(value);
    }
    return "?";
  }

  /// factual | none | swap_clip[:id] | ext_remove | shift_large | shift:N |
  /// drop_view[:v] | gate:c | lambda:x
  static InterventionSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    InterventionSpec s;
    if (head == "factual" || head == "none") {
      s = none();
    } else if (head == "swap_clip") {
      s = swap_clip(arg);
    } else if (head == "ext_remove") {
      s = remove_external();
    } else if (head == "shift_large") {
      s = shift_large();
    } else if (head == "shift" && !arg.empty()) {
      s = shift_external(static_cast<std::uint32_t>(KeyValueText::parse_u64("shift", arg)));
    } else if (head == "drop_view") {
      s = drop_view(arg.empty() ? 1 : static_cast<std::size_t>(KeyValueText::parse_u64("drop_view", arg)));
    } else if (head == "gate" && !arg.empty()) {
      s = gate_clamp(KeyValueText::parse_double("gate", arg));
    } else if (head == "lambda" && !arg.empty()) {
      s = lambda_override(KeyValueText::parse_double("lambda", arg));
    } else {
      fail(ErrorCode::kInvalidConfig, "unknown intervention '" + text + "'");
    }
    s.validate();
    return s;
  }
};

}  // namespace dwm
