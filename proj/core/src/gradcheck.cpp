#include "anchorseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace anchorseg {
namespace {

double evaluate(const LossBuilder& loss) {
  Tape<double> tape;
  return loss(tape).value().item();
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, const std::vector<Parameter<double>*>& params, double eps) {
  GradCheckResult result;
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto l = loss(tape);
    tape.backward(l);
  }
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto* p = params[pi];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double a = analytic[pi][i];
      if (!std::isfinite(a)) {
        if (result.ok) result.failure = p->name + "[" + std::to_string(i) + "] analytic gradient is not finite";
        result.ok = false;
        continue;
      }
      const double x0 = p->value[i];
      p->value[i] = x0 + eps;
      const double fp = evaluate(loss);
      p->value[i] = x0 - eps;
      const double fm = evaluate(loss);
      p->value[i] = x0;
      const double cd = (fp - fm) / (2.0 * eps);
      const double err = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-8});
      ++result.entries_checked;
      if (err > result.max_rel_error || !std::isfinite(err)) {
        result.max_rel_error = std::isfinite(err) ? err : 1e300;
        result.worst_param = p->name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace anchorseg
