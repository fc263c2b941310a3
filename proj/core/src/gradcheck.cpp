#include "tactile/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tactile {

std::vector<std::string> GradCheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& p : params)
    if (!p.passed) out.push_back(p.name);
  return out;
}

GradCheckReport gradient_check(ParameterStore& params, const LossClosure& closure, const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;
  if (params.empty()) return report;

  GradientSet analytic(params);
  closure(params, &analytic);

  for (ParamId id = 0; id < params.size(); ++id) {
    ParamCheck check;
    check.name = params.name(id);
    Matrix& w = params.value(id);
    check.entries = static_cast<std::size_t>(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + options.epsilon;
      const double up = closure(params, nullptr);
      w.data()[i] = saved - options.epsilon;
      const double down = closure(params, nullptr);
      w.data()[i] = saved;

      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double a = analytic[id].data()[i];
      const double gap = std::abs(a - numeric);
      const double rel = gap < options.abs_floor ? 0.0 : gap / std::max(std::abs(a), std::abs(numeric));
      check.max_abs_error = std::max(check.max_abs_error, gap);
      if (rel > check.max_rel_error) {
        check.max_rel_error = rel;
        check.worst_entry = static_cast<std::size_t>(i);
      }
    }
    check.passed = check.max_rel_error <= options.tolerance;
    report.passed = report.passed && check.passed;
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace tactile
