#include "anchorseg/optim.hpp"

#include <algorithm>
#include <cmath>

namespace anchorseg {
namespace {

template <typename T>
double grad_norm_impl(std::span<Parameter<T>* const> params) {
  double sq = 0.0;
  for (const auto* p : params)
    for (auto g : p->grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

}  // namespace

double global_grad_norm(std::span<Parameter<float>* const> params) { return grad_norm_impl(params); }
double global_grad_norm(std::span<Parameter<double>* const> params) { return grad_norm_impl(params); }

template <typename T>
double AdamW<T>::lr_at(std::size_t step) const {
  if (cfg_.warmup_steps == 0) return cfg_.lr;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg_.warmup_steps));
  return cfg_.lr * frac;
}

template <typename T>
double AdamW<T>::step(std::span<Parameter<T>* const> params) {
  ++steps_;
  const double norm = grad_norm_impl(params);
  const double clip_scale = (cfg_.clip > 0.0 && norm > cfg_.clip) ? cfg_.clip / norm : 1.0;
  const double lr = lr_at(steps_);
  for (auto* p : params) {
    ++p->step;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(p->step));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(p->step));
    auto value = p->value.data();
    auto grad = p->grad.data();
    auto m = p->m.data();
    auto v = p->v.data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = static_cast<double>(grad[i]) * clip_scale;
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      double x = static_cast<double>(value[i]);
      x -= lr * cfg_.weight_decay * x;
      x -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      value[i] = static_cast<T>(x);
    }
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace anchorseg
