#include "gatpos/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gatpos::ad {

GradCheckReport gradient_check(std::span<Param* const> params,
                               const std::function<double()>& loss_value,
                               const std::function<void()>& compute_grads,
                               double step, double tol) {
  for (Param* p : params) p->zero_grad();
  compute_grads();

  GradCheckReport report;
  report.tolerance = tol;
  for (Param* p : params) {
    GradCheckEntry entry;
    entry.param = p->name;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = loss_value();
      p->value[i] = saved - step;
      const double down = loss_value();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      // unit floor in the denominator: sub-unit gradients are compared on
      // an absolute scale, so finite-difference noise cannot dominate
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic), 1.0});
      const double rel = std::abs(numeric - analytic) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    entry.pass = entry.max_rel_err < tol;
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace gatpos::ad
