#pragma once

#include <cstddef>

#include "anchorseg/grounding.hpp"
#include "anchorseg/imaging.hpp"
#include "anchorseg/tape.hpp"

// Token-Mask Cycle Consistency, mask losses and the total objective.
// Target operands never receive gradient: bce/dice only differentiate the
// prediction argument.
namespace anchorseg::objectives {

struct LossWeights {
  double bce = 2.0;
  double dice = 4.0;
  double mask = 1.0;
  double tmcc = 1.0;
  double txt = 0.0;
};

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

/// M_sigma: Gaussian-softened binary mask (reflect padding, adaptive size).
template <typename T>
Tensor<T> soften_mask(const Tensor<T>& mask, const imaging::GaussianSpec& spec);

/// S-up in [0,1]^{h x w}: the similarity map path of the spatial prior.
template <typename T>
Var<T> token_map_upsampled(Var<T> raw, std::size_t h, std::size_t w, std::size_t l_vl);

/// M_sigma-down in [0,1]^N: long-side resize+pad to L_vl, nearest to G x G,
/// Gaussian on the token grid, flattened row-major.
template <typename T>
Tensor<T> downsample_target(const Tensor<T>& mask, std::size_t grid, std::size_t l_vl,
                            const imaging::GaussianSpec& spec);

/// mean(-[t ln p + (1-t) ln(1-p)]) with p clamped to [1e-7, 1-1e-7].
template <typename T>
Var<T> bce_loss(Var<T> p, Var<T> target);

/// 1 - (2 sum(pt) + smooth) / (sum(p) + sum(t) + smooth)
template <typename T>
Var<T> dice_loss(Var<T> p, Var<T> target, double smooth = kDiceSmooth);

template <typename T>
Var<T> loss_t2m(Var<T> s_up, Var<T> m_sigma, const LossWeights& weights);

template <typename T>
Var<T> loss_m2t(Var<T> s_normalized, Var<T> m_sigma_down, const LossWeights& weights);

template <typename T>
Var<T> loss_tmcc(Var<T> s_up, Var<T> m_sigma, Var<T> s_normalized, Var<T> m_sigma_down, const LossWeights& weights);

/// lambda_bce * bce(sigmoid(logits), M) + lambda_dice * dice(sigmoid(logits), M)
template <typename T>
Var<T> loss_mask(Var<T> logits, Var<T> mask, const LossWeights& weights);

template <typename T>
struct LossTerms {
  Var<T> total;
  Var<T> mask;
  Var<T> t2m;  // unset when disabled
  Var<T> m2t;
  bool has_t2m = false;
  bool has_m2t = false;
};

/// Operands for the cycle-consistency half of the objective.
template <typename T>
struct CycleOperands {
  Var<T> s_up;
  Var<T> m_sigma;
  Var<T> s_normalized;
  Var<T> m_sigma_down;
  bool use_t2m = true;
  bool use_m2t = true;
};

/// L = txt * external_txt + mask * L_mask + tmcc * (L_T2M + L_M2T).
/// A null `cycle` drops the TMCC term.
template <typename T>
LossTerms<T> loss_total(Var<T> logits, Var<T> mask, const CycleOperands<T>* cycle, const LossWeights& weights,
                        double external_txt_loss = 0.0);

}  // namespace anchorseg::objectives
