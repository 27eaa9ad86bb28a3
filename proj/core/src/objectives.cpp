#include "anchorseg/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "anchorseg/ops.hpp"

namespace anchorseg::objectives {
namespace {

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": prediction " + shape_str(a.shape()) + " vs target " +
                        shape_str(b.shape()));
  }
}

template <typename T>
Var<T> weighted_pair(Var<T> p, Var<T> t, const LossWeights& w) {
  return ops::add(ops::scale(bce_loss(p, t), static_cast<T>(w.bce)), ops::scale(dice_loss(p, t), static_cast<T>(w.dice)));
}

}  // namespace

template <typename T>
Tensor<T> soften_mask(const Tensor<T>& mask, const imaging::GaussianSpec& spec) {
  auto out = imaging::gaussian_smooth(mask, spec);
  for (auto& v : out.data()) v = std::clamp(v, T(0), T(1));
  return out;
}

template <typename T>
Var<T> token_map_upsampled(Var<T> raw, std::size_t h, std::size_t w, std::size_t l_vl) {
  return grounding::similarity_map(raw, h, w, l_vl).map;
}

template <typename T>
Tensor<T> downsample_target(const Tensor<T>& mask, std::size_t grid, std::size_t l_vl,
                            const imaging::GaussianSpec& spec) {
  if (mask.rank() != 2) throw DimensionError("downsample_target: mask must be [h,w], got " + shape_str(mask.shape()));
  auto canvas = imaging::resize_long_side_pad(mask, l_vl).map;
  auto token_grid = imaging::nearest_resize(canvas, grid, grid);
  auto soft = imaging::gaussian_smooth(token_grid, spec);
  for (auto& v : soft.data()) v = std::clamp(v, T(0), T(1));
  return soft.reshaped({grid * grid});
}

template <typename T>
Var<T> bce_loss(Var<T> p, Var<T> target) {
  require_same(p, target, "bce_loss");
  const auto& pv = p.value();
  const auto& tv = target.value();
  const std::size_t n = pv.size();
  if (n == 0) throw ContractError("bce_loss on empty tensors");
  const T lo = static_cast<T>(kProbClamp), hi = static_cast<T>(1.0 - kProbClamp);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = std::clamp(pv[i], lo, hi);
    const double t = tv[i];
    acc -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
  }
  const auto pid = p.id, tid = target.id;
  // Only the prediction is a parent: no gradient path into targets.
  return p.tape->record(Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n))), {pid},
                        [pid, tid, n, lo, hi](Tape<T>& tape, std::size_t self) {
                          const T g = tape.grad(self)[0] / static_cast<T>(n);
                          const auto& pv = tape.value(pid);
                          const auto& tv = tape.value(tid);
                          auto& gp = tape.grad_buffer(pid);
                          for (std::size_t i = 0; i < n; ++i) {
                            const T x = pv[i];
                            if (x < lo || x > hi) continue;
                            gp[i] += g * (-tv[i] / x + (T(1) - tv[i]) / (T(1) - x));
                          }
                        });
}

template <typename T>
Var<T> dice_loss(Var<T> p, Var<T> target, double smooth) {
  require_same(p, target, "dice_loss");
  const auto& pv = p.value();
  const auto& tv = target.value();
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    inter += static_cast<double>(pv[i]) * tv[i];
    sp += pv[i];
    st += tv[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = sp + st + smooth;
  const auto pid = p.id, tid = target.id;
  return p.tape->record(Tensor<T>::scalar(static_cast<T>(1.0 - num / den)), {pid},
                        [pid, tid, num, den](Tape<T>& tape, std::size_t self) {
                          const double g = tape.grad(self)[0];
                          const auto& tv = tape.value(tid);
                          auto& gp = tape.grad_buffer(pid);
                          for (std::size_t i = 0; i < gp.size(); ++i) {
                            gp[i] += static_cast<T>(-g * (2.0 * tv[i] * den - num) / (den * den));
                          }
                        });
}

template <typename T>
Var<T> loss_t2m(Var<T> s_up, Var<T> m_sigma, const LossWeights& weights) {
  require_same(s_up, m_sigma, "loss_t2m");
  return weighted_pair(s_up, m_sigma, weights);
}

template <typename T>
Var<T> loss_m2t(Var<T> s_normalized, Var<T> m_sigma_down, const LossWeights& weights) {
  if (s_normalized.size() != m_sigma_down.size()) {
    throw ContractError("loss_m2t: " + std::to_string(s_normalized.size()) + " responses vs " +
                        std::to_string(m_sigma_down.size()) + " target tokens");
  }
  return weighted_pair(ops::reshape(s_normalized, m_sigma_down.shape()), m_sigma_down, weights);
}

template <typename T>
Var<T> loss_tmcc(Var<T> s_up, Var<T> m_sigma, Var<T> s_normalized, Var<T> m_sigma_down, const LossWeights& weights) {
  return ops::add(loss_t2m(s_up, m_sigma, weights), loss_m2t(s_normalized, m_sigma_down, weights));
}

template <typename T>
Var<T> loss_mask(Var<T> logits, Var<T> mask, const LossWeights& weights) {
  require_same(logits, mask, "loss_mask");
  return weighted_pair(ops::sigmoid(logits), mask, weights);
}

template <typename T>
LossTerms<T> loss_total(Var<T> logits, Var<T> mask, const CycleOperands<T>* cycle, const LossWeights& weights,
                        double external_txt_loss) {
  auto& tape = *logits.tape;
  LossTerms<T> terms;
  terms.mask = loss_mask(logits, mask, weights);
  auto total = ops::add(tape.constant(Tensor<T>::scalar(static_cast<T>(weights.txt * external_txt_loss))),
                        ops::scale(terms.mask, static_cast<T>(weights.mask)));
  if (cycle != nullptr) {
    if (cycle->use_t2m) {
      terms.t2m = loss_t2m(cycle->s_up, cycle->m_sigma, weights);
      terms.has_t2m = true;
      total = ops::add(total, ops::scale(terms.t2m, static_cast<T>(weights.tmcc)));
    }
    if (cycle->use_m2t) {
      terms.m2t = loss_m2t(cycle->s_normalized, cycle->m_sigma_down, weights);
      terms.has_m2t = true;
      total = ops::add(total, ops::scale(terms.m2t, static_cast<T>(weights.tmcc)));
    }
  }
  terms.total = total;
  return terms;
}

#define ANCHORSEG_INSTANTIATE_OBJECTIVES(T)                                                                \
  template Tensor<T> soften_mask(const Tensor<T>&, const imaging::GaussianSpec&);                         \
  template Var<T> token_map_upsampled(Var<T>, std::size_t, std::size_t, std::size_t);                     \
  template Tensor<T> downsample_target(const Tensor<T>&, std::size_t, std::size_t, const imaging::GaussianSpec&); \
  template Var<T> bce_loss(Var<T>, Var<T>);                                                               \
  template Var<T> dice_loss(Var<T>, Var<T>, double);                                                      \
  template Var<T> loss_t2m(Var<T>, Var<T>, const LossWeights&);                                           \
  template Var<T> loss_m2t(Var<T>, Var<T>, const LossWeights&);                                           \
  template Var<T> loss_tmcc(Var<T>, Var<T>, Var<T>, Var<T>, const LossWeights&);                          \
  template Var<T> loss_mask(Var<T>, Var<T>, const LossWeights&);                                          \
  template LossTerms<T> loss_total(Var<T>, Var<T>, const CycleOperands<T>*, const LossWeights&, double);

ANCHORSEG_INSTANTIATE_OBJECTIVES(float)
ANCHORSEG_INSTANTIATE_OBJECTIVES(double)

}  // namespace anchorseg::objectives
