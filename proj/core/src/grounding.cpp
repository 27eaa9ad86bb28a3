#include "anchorseg/grounding.hpp"

#include <algorithm>
#include <cmath>

#include "anchorseg/init.hpp"
#include "anchorseg/ops.hpp"

namespace anchorseg::grounding {
namespace {

template <typename T>
void expect_shape(const Var<T>& v, const Shape& want, const char* step) {
  if (v.shape() != want) {
    throw DimensionError(std::string("spatial prior, ") + step + ": expected " + shape_str(want) + ", got " +
                         shape_str(v.shape()));
  }
}

}  // namespace

std::size_t grid_extent(std::size_t n) {
  const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (n == 0 || g * g != n) throw ContractError("token count " + std::to_string(n) + " is not a perfect square");
  return g;
}

Strides default_strides(std::size_t l_sam, std::size_t h) {
  if (h == 0 || l_sam % h != 0) {
    throw ConfigError("L_sam " + std::to_string(l_sam) + " is not a multiple of feature extent " + std::to_string(h));
  }
  std::size_t r = l_sam / h;
  std::vector<std::size_t> factors;
  for (std::size_t p = 2; r > 1; ++p) {
    while (r % p == 0) {
      factors.push_back(p);
      r /= p;
    }
  }
  std::sort(factors.rbegin(), factors.rend());
  Strides s{1, 1, 1};
  for (std::size_t i = 0; i < factors.size(); ++i) {
    // deal to the currently smallest stride, earliest layer on ties
    auto it = std::min_element(s.begin(), s.end());
    *it *= factors[i];
  }
  std::sort(s.rbegin(), s.rend());
  return s;
}

template <typename T>
ConvHeadParams<T> ConvHeadParams<T>::create(ParameterStore<T>& store, std::size_t channels, Strides strides,
                                            std::mt19937_64& rng, const std::string& prefix) {
  ConvHeadParams p;
  p.strides = strides;
  p.k1 = &store.add(prefix + ".k1", fan_in_tensor<T>({4, 1, 3, 3}, 9, rng));
  p.b1 = &store.add(prefix + ".b1", Tensor<T>({4}));
  p.k2 = &store.add(prefix + ".k2", fan_in_tensor<T>({16, 4, 3, 3}, 36, rng));
  p.b2 = &store.add(prefix + ".b2", Tensor<T>({16}));
  p.k3 = &store.add(prefix + ".k3", fan_in_tensor<T>({channels, 16, 3, 3}, 144, rng));
  p.b3 = &store.add(prefix + ".b3", Tensor<T>({channels}));
  return p;
}

template <typename T>
FusionParams<T> FusionParams<T>::create(ParameterStore<T>& store, std::size_t channels, std::size_t anchors,
                                        const std::string& prefix) {
  Tensor<T> w({channels, anchors * channels, 1, 1});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < anchors; ++t) w[c * anchors * channels + t * channels + c] = T(1) / static_cast<T>(anchors);
  FusionParams p;
  p.w = &store.add(prefix + ".w", std::move(w));
  p.b = &store.add(prefix + ".b", Tensor<T>({channels}));
  return p;
}

template <typename T>
Var<T> spatial_responses(Var<T> tokens, Var<T> anchor) {
  const auto& tv = tokens.value();
  const auto& av = anchor.value();
  if (tv.rank() != 2 || av.size() != tv.dim(1)) {
    throw ContractError("spatial_responses: tokens " + shape_str(tv.shape()) + " vs anchor " + shape_str(av.shape()));
  }
  auto column = ops::reshape(anchor, {av.size(), 1});
  return ops::reshape(ops::matmul(tokens, column), {tv.dim(0)});
}

template <typename T>
SimilarityTrace<T> similarity_map(Var<T> raw, std::size_t h, std::size_t w, std::size_t l_vl) {
  if (raw.shape().size() != 1) throw DimensionError("similarity_map: responses must be a vector, got " + shape_str(raw.shape()));
  const std::size_t n = raw.size();
  const std::size_t g = grid_extent(n);
  SimilarityTrace<T> t;
  t.normalized = imaging::minmax_normalize(raw);
  t.grid = ops::reshape(t.normalized, {g, g});
  t.upsampled = imaging::bilinear_resize(t.grid, l_vl, l_vl, false);
  expect_shape(t.upsampled, {l_vl, l_vl}, "L_vl canvas");
  t.crop = imaging::long_side_extent(h, w, l_vl);
  t.cropped = imaging::crop_top_left(t.upsampled, t.crop.h, t.crop.w);
  t.map = imaging::bilinear_resize(t.cropped, h, w, false);
  expect_shape(t.map, {h, w}, "restored map");
  return t;
}

template <typename T>
PriorTrace<T> build_spatial_prior(const SimilarityTrace<T>& similarity, const PriorGeometry& geo,
                                  const ConvHeadParams<T>& head) {
  PriorTrace<T> t;
  t.similarity = similarity;
  expect_shape(similarity.map, {geo.h, geo.w}, "restored map");
  auto padded = imaging::resize_long_side_pad(similarity.map, geo.l_sam);
  t.content = padded.content;
  t.canvas = ops::reshape(padded.map, {1, geo.l_sam, geo.l_sam});
  auto& tape = *similarity.map.tape;
  const auto& s = head.strides;
  t.layer1 = ops::relu(ops::conv2d(t.canvas, tape.param(*head.k1), tape.param(*head.b1), s[0]));
  t.layer2 = ops::relu(ops::conv2d(t.layer1, tape.param(*head.k2), tape.param(*head.b2), s[1]));
  t.prior = ops::conv2d(t.layer2, tape.param(*head.k3), tape.param(*head.b3), s[2]);
  expect_shape(t.prior, {geo.channels, geo.feat_h, geo.feat_w}, "conv head output");
  return t;
}

template <typename T>
PriorTrace<T> build_spatial_prior(Var<T> raw, const PriorGeometry& geo, const ConvHeadParams<T>& head) {
  return build_spatial_prior(similarity_map(raw, geo.h, geo.w, geo.l_vl), geo, head);
}

template <typename T>
Var<T> inject_prior(Var<T> features, Var<T> prior) {
  if (features.shape() != prior.shape()) {
    throw ContractError("inject_prior: features " + shape_str(features.shape()) + " vs prior " +
                        shape_str(prior.shape()));
  }
  return ops::add(features, prior);
}

template <typename T>
Var<T> fuse_multi_anchor(const std::vector<Var<T>>& priors, const FusionParams<T>& fusion) {
  if (priors.empty()) throw ContractError("fuse_multi_anchor: no priors");
  for (const auto& p : priors) {
    if (p.shape() != priors.front().shape()) {
      throw ContractError("fuse_multi_anchor: heterogeneous prior shapes " + shape_str(priors.front().shape()) +
                          " vs " + shape_str(p.shape()));
    }
  }
  auto& tape = *priors.front().tape;
  auto stacked = ops::concat_channels(priors);
  return ops::conv2d(stacked, tape.param(*fusion.w), tape.param(*fusion.b), 1);
}

#define ANCHORSEG_INSTANTIATE_GROUNDING(T)                                                                  \
  template struct ConvHeadParams<T>;                                                                       \
  template struct FusionParams<T>;                                                                         \
  template Var<T> spatial_responses(Var<T>, Var<T>);                                                       \
  template SimilarityTrace<T> similarity_map(Var<T>, std::size_t, std::size_t, std::size_t);               \
  template PriorTrace<T> build_spatial_prior(const SimilarityTrace<T>&, const PriorGeometry&,              \
                                             const ConvHeadParams<T>&);                                    \
  template PriorTrace<T> build_spatial_prior(Var<T>, const PriorGeometry&, const ConvHeadParams<T>&);      \
  template Var<T> inject_prior(Var<T>, Var<T>);                                                            \
  template Var<T> fuse_multi_anchor(const std::vector<Var<T>>&, const FusionParams<T>&);

ANCHORSEG_INSTANTIATE_GROUNDING(float)
ANCHORSEG_INSTANTIATE_GROUNDING(double)

}  // namespace anchorseg::grounding
