#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "anchorseg/ops.hpp"
#include "anchorseg/tape.hpp"

namespace testsupport {

using anchorseg::Shape;
using anchorseg::Tape;
using anchorseg::Tensor;
using anchorseg::Var;

using Builder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Magnitudes in [0.2, 1] with random sign: keeps relu/minmax kinks far from
/// any finite-difference probe.
inline Tensor<double> nonzero_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

/// Independent oracle: central differences of sum(w * f(x)) against the
/// tape's reverse-mode gradient, evaluated entry by entry in double.
/// Returns max |a - cd| / max(|a|, |cd|, 1e-8).
inline double fd_max_rel_error(std::vector<Tensor<double>> inputs, const Builder& f, std::uint64_t salt,
                               double eps = 1e-5) {
  Tensor<double> weights;
  auto forward_value = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    const auto& y = f(tape, vars).value();
    if (weights.empty()) {
      std::mt19937_64 rng(salt);
      weights = random_tensor(y.shape(), rng);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += weights[i] * y[i];
    return acc;
  };
  forward_value(inputs);

  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& x : inputs) vars.push_back(tape.leaf(x));
  auto y = f(tape, vars);
  auto loss = anchorseg::ops::sum(anchorseg::ops::mul(y, tape.constant(weights)));
  tape.backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic = vars[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + eps;
      const double fp = forward_value(inputs);
      inputs[k][i] = x0 - eps;
      const double fm = forward_value(inputs);
      inputs[k][i] = x0;
      const double cd = (fp - fm) / (2.0 * eps);
      const double a = analytic[i];
      worst = std::max(worst, std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-8}));
    }
  }
  return worst;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Fresh empty directory under the system temp path, unique per test name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("anchorseg-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
