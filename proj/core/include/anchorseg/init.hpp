#pragma once

#include <cmath>
#include <random>

#include "anchorseg/tensor.hpp"

namespace anchorseg {

/// N(0, stddev^2) entries drawn in double precision so float and double
/// models built from one seed hold the same values up to rounding.
template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

/// Fan-in scaled Gaussian init for a weight whose first axis is the input.
template <typename T>
Tensor<T> fan_in_tensor(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  return normal_tensor<T>(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace anchorseg
