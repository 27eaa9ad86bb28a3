#pragma once

#include <cstddef>
#include <span>

#include "anchorseg/tape.hpp"

namespace anchorseg {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.0;
  double eps = 1e-8;
  std::size_t warmup_steps = 100;
  /// Global L2 norm bound over all gradients; <= 0 disables clipping.
  double clip = 1.0;
};

/// AdamW with decoupled weight decay, bias-corrected moments, linear warmup
/// and global-norm gradient clipping.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  /// Applies one update and returns the gradient norm before clipping.
  double step(std::span<Parameter<T>* const> params);

  /// Learning rate used for the given 1-based step.
  double lr_at(std::size_t step) const;
  std::size_t steps_taken() const { return steps_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::size_t steps_ = 0;
};

double global_grad_norm(std::span<Parameter<float>* const> params);
double global_grad_norm(std::span<Parameter<double>* const> params);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace anchorseg
