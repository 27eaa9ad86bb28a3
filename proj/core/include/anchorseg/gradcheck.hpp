#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "anchorseg/tape.hpp"

namespace anchorseg {

struct GradCheckResult {
  /// max |analytic - central| / max(|analytic|, |central|, 1e-8) over all entries
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
  bool ok = true;       // false when an analytic gradient is non-finite
  std::string failure;  // location of the first non-finite entry

  bool passed(double tol) const { return ok && max_rel_error < tol; }
};

/// Builds the scalar loss on the given tape. Must be deterministic; parameters
/// enter through tape.param().
using LossBuilder = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients with central differences of step eps.
GradCheckResult grad_check(const LossBuilder& loss, const std::vector<Parameter<double>*>& params,
                           double eps = 1e-5);

}  // namespace anchorseg
