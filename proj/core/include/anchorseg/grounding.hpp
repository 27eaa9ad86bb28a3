#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "anchorseg/imaging.hpp"
#include "anchorseg/tape.hpp"

// Token-level spatial responses and the language grounded spatial prior:
// normalize -> token grid -> L_vl canvas -> aspect crop -> h x w -> long-side
// resize and pad to L_sam -> three-layer conv head -> C x H x W prior.
namespace anchorseg::grounding {

using Strides = std::array<std::size_t, 3>;

/// G with G*G == n; throws ContractError when n is not a perfect square.
std::size_t grid_extent(std::size_t n);

/// Splits ratio = L_sam / H into three strides (prime factors dealt
/// round-robin, larger first), e.g. 4 -> {2,2,1}.
Strides default_strides(std::size_t l_sam, std::size_t h);

struct PriorGeometry {
  std::size_t h = 0, w = 0;        // image extent
  std::size_t l_vl = 336;          // similarity alignment canvas
  std::size_t l_sam = 256;         // decoder input canvas
  std::size_t channels = 256;      // C
  std::size_t feat_h = 64, feat_w = 64;  // H, W
  Strides strides{2, 2, 1};
};

/// Channel path 1 -> 4 -> 16 -> C with 3x3 kernels and relu between layers.
template <typename T>
struct ConvHeadParams {
  Parameter<T>* k1 = nullptr;
  Parameter<T>* b1 = nullptr;
  Parameter<T>* k2 = nullptr;
  Parameter<T>* b2 = nullptr;
  Parameter<T>* k3 = nullptr;
  Parameter<T>* b3 = nullptr;
  Strides strides{2, 2, 1};

  static ConvHeadParams create(ParameterStore<T>& store, std::size_t channels, Strides strides, std::mt19937_64& rng,
                               const std::string& prefix = "prior_head");
};

/// Phi: 1x1 conv from T*C channels to C.
template <typename T>
struct FusionParams {
  Parameter<T>* w = nullptr;  // [C, T*C, 1, 1]
  Parameter<T>* b = nullptr;  // [C]

  /// Identity-like init: output channel c averages channel c of every prior.
  static FusionParams create(ParameterStore<T>& store, std::size_t channels, std::size_t anchors,
                             const std::string& prefix = "fusion");
};

/// s_i = <i_i, q_anc>. tokens [N,k], anchor [1,k] or [k]; returns [N].
template <typename T>
Var<T> spatial_responses(Var<T> tokens, Var<T> anchor);

/// Lines 3-7 of the conditioning pipeline: responses to an h x w map in [0,1].
template <typename T>
struct SimilarityTrace {
  Var<T> normalized;  // [N]
  Var<T> grid;        // [G,G]
  Var<T> upsampled;   // [L_vl, L_vl]
  imaging::ScaledExtent crop;
  Var<T> cropped;     // [h', w']
  Var<T> map;         // [h, w]
};

template <typename T>
SimilarityTrace<T> similarity_map(Var<T> raw, std::size_t h, std::size_t w, std::size_t l_vl);

template <typename T>
struct PriorTrace {
  SimilarityTrace<T> similarity;
  imaging::ScaledExtent content;  // h', w' on the L_sam canvas
  Var<T> canvas;                  // [1, L_sam, L_sam]
  Var<T> layer1;
  Var<T> layer2;
  Var<T> prior;                   // [C, H, W]
};

/// Continues from an existing similarity trace so the prior and the
/// token-to-mask supervision share one normalization pass.
template <typename T>
PriorTrace<T> build_spatial_prior(const SimilarityTrace<T>& similarity, const PriorGeometry& geometry,
                                  const ConvHeadParams<T>& head);

template <typename T>
PriorTrace<T> build_spatial_prior(Var<T> raw, const PriorGeometry& geometry, const ConvHeadParams<T>& head);

/// f + P, shapes must match.
template <typename T>
Var<T> inject_prior(Var<T> features, Var<T> prior);

template <typename T>
Var<T> fuse_multi_anchor(const std::vector<Var<T>>& priors, const FusionParams<T>& fusion);

}  // namespace anchorseg::grounding
