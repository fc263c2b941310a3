#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tactile/autodiff.hpp"

namespace tactile {

/// Evaluates a scalar loss at the store's current values. When `grads` is
/// non-null it is sized to the store and zeroed; the closure accumulates the
/// analytic gradient into it. Must be deterministic (no dropout).
using LossClosure = std::function<double(const ParameterStore& params, GradientSet* grads)>;

struct GradCheckOptions {
  double tolerance = 1e-3;
  double epsilon = 1e-3;
  /// Entries whose analytic/numeric gap is below this count as exact.
  double abs_floor = 1e-6;
};

struct ParamCheck {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_entry = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double tolerance = 0.0;
  bool passed = true;

  std::vector<std::string> failures() const;
};

/// Central differences over every entry of every parameter. The relative
/// error of an entry is |a - n| / max(|a|, |n|), or 0 when |a - n| is below
/// abs_floor. The store is restored before returning.
GradCheckReport gradient_check(ParameterStore& params, const LossClosure& closure,
                               const GradCheckOptions& options = {});

}  // namespace tactile
