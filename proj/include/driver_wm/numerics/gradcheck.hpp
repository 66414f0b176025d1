#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "driver_wm/error.hpp"
#include "driver_wm/numerics/autodiff.hpp"
#include "driver_wm/numerics/nn.hpp"
#include "driver_wm/numerics/parameter_set.hpp"

namespace dwm {

/// A scalar objective together with its named contributions, so a
/// non-finite total can be traced back to the term that produced it.
struct ScalarObjective {
  ad::Var total;
  std::vector<std::pair<std::string, ad::Var>> terms;
};

using ObjectiveFn = std::function<ScalarObjective(const ParamView&)>;

inline void check_finite(const ScalarObjective& obj) {
  for (const auto& [name, term] : obj.terms) {
    if (!term.value().all_finite()) fail(ErrorCode::kNonFinite, "loss term '" + name + "'");
  }
  if (!obj.total.value().all_finite()) fail(ErrorCode::kNonFinite, "loss term 'total'");
}

struct GradResult {
  double loss = 0.0;
  ParameterSet grads;
};

inline GradResult value_and_grad(const ParameterSet& params, const ObjectiveFn& loss_fn) {
  ParamView view(params, true);
  ScalarObjective obj = loss_fn(view);
  check_finite(obj);
  ad::backward(obj.total);
  return {obj.total.item(), view.gradients(params)};
}

inline ParameterSet grad_of_scalar(const ParameterSet& params, const ObjectiveFn& loss_fn) {
  return value_and_grad(params, loss_fn).grads;
}

inline ParameterSet grad_of_scalar(const ParameterSet& params,
                                   const std::function<ad::Var(const ParamView&)>& loss_fn) {
  return grad_of_scalar(params, [&](const ParamView& v) { return ScalarObjective{loss_fn(v), {}}; });
}

inline double evaluate_objective(const ParameterSet& params, const ObjectiveFn& loss_fn) {
  ParamView view(params, false);
  ScalarObjective obj = loss_fn(view);
  check_finite(obj);
  return obj.total.item();
}

struct GradCheckEntry {
  std::string name;
  double max_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool pass = true;
};

/// Central difference stencils: 3-point has O(h^2) truncation, 5-point O(h^4).
enum class Stencil { kThreePoint, kFivePoint };

/// Compares reverse-mode gradients with central differences, element by
/// element. The error of one element is |a - n| / max(|a|, |n|); when both
/// magnitudes are below `abs_floor` the plain difference |a - n| is used
/// instead, which covers parameters whose gradient is (numerically) zero.
/// Each tensor reports its worst element.
inline GradCheckReport finite_diff_check(const ParameterSet& params, const ObjectiveFn& loss_fn, double step,
                                         double tol, double abs_floor = 1e-6, Stencil stencil = Stencil::kThreePoint) {
  if (!(step > 0.0)) fail(ErrorCode::kInvalidConfig, "finite difference step must be positive");
  const ParameterSet analytic = grad_of_scalar(params, loss_fn);
  ParameterSet probe = params;
  GradCheckReport report;
  for (std::size_t e = 0; e < probe.size(); ++e) {
    auto& entry = probe.entries()[e];
    if (!entry.trainable) continue;
    GradCheckEntry result{entry.name};
    const Tensor& a = analytic.entries()[e].value;
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double saved = entry.value[i];
      auto at = [&](double offset) {
        entry.value[i] = saved + offset;
        const double f = evaluate_objective(probe, loss_fn);
        entry.value[i] = saved;
        return f;
      };
      const double numeric = stencil == Stencil::kThreePoint
                                 ? (at(step) - at(-step)) / (2.0 * step)
                                 : (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
      const double scale = std::max(std::abs(a[i]), std::abs(numeric));
      const double diff = std::abs(a[i] - numeric);
      const double err = scale < abs_floor ? diff : diff / scale;
      result.max_error = std::max(result.max_error, err);
    }
    result.pass = result.max_error <= tol;
    report.worst = std::max(report.worst, result.max_error);
    report.pass = report.pass && result.pass;
    report.entries.push_back(std::move(result));
  }
  return report;
}

}  // namespace dwm
