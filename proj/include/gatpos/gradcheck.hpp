#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gatpos/tape.hpp"

namespace gatpos::ad {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool pass = true;
  double tolerance = 0.0;
};

// Compares analytic gradients against central finite differences.
// loss_value: deterministic forward evaluation at the current param values
// (dropout disabled, negatives fixed). compute_grads: fills param.grad.
GradCheckReport gradient_check(std::span<Param* const> params,
                               const std::function<double()>& loss_value,
                               const std::function<void()>& compute_grads,
                               double step, double tol);

}  // namespace gatpos::ad
