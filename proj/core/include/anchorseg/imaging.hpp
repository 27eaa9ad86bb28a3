#pragma once

#include <cstddef>
#include <vector>

#include "anchorseg/tape.hpp"

// Resampling, padding, cropping, normalization and Gaussian softening on grid
// maps. A grid map is a Tensor of shape [H,W] or [C,H,W]; operations act on
// the two trailing axes. Functions taking Var are differentiable w.r.t. map
// values; the plain-Tensor forms compute the same numbers without a tape.
namespace anchorseg::imaging {

struct GaussianSpec {
  double sigma = 7.0;
  std::size_t ksize = 31;
};

/// Sparse 1-D resampling matrix: output o reads in[first[o] + t] * weight[offset[o] + t]
/// for t < count[o].
struct AxisWeights {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<std::size_t> first;
  std::vector<std::size_t> count;
  std::vector<std::size_t> offset;
  std::vector<double> weight;
};

/// Half-pixel (align_corners=False) bilinear weights. Downscaling with
/// antialias widens the triangle filter by the scale factor and normalizes
/// each output's weights to sum to one; otherwise the 2-tap edge-clamped rule
/// applies.
AxisWeights bilinear_axis_weights(std::size_t in, std::size_t out, bool antialias);

/// Legacy nearest rule: src = min(floor(o * in / out), in - 1).
std::size_t nearest_source_index(std::size_t o, std::size_t in, std::size_t out);

struct ScaledExtent {
  std::size_t h = 0;
  std::size_t w = 0;
};

/// alpha = L / max(h, w); h' = floor(h*alpha + 0.5), w' = floor(w*alpha + 0.5).
ScaledExtent long_side_extent(std::size_t h, std::size_t w, std::size_t long_side);

/// Kernel size and sigma actually used for an h x w grid: the nominal size is
/// capped at the largest odd number <= min(h, w) and sigma shrinks in proportion.
GaussianSpec adapted_gaussian(const GaussianSpec& spec, std::size_t h, std::size_t w);

/// Normalized 1-D Gaussian taps for offsets -(k-1)/2 .. (k-1)/2.
std::vector<double> gaussian_kernel_1d(const GaussianSpec& spec);

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& m, std::size_t out_h, std::size_t out_w, bool antialias);
template <typename T>
Var<T> bilinear_resize(Var<T> m, std::size_t out_h, std::size_t out_w, bool antialias);

template <typename T>
Tensor<T> nearest_resize(const Tensor<T>& m, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> crop_top_left(const Tensor<T>& m, std::size_t h, std::size_t w);
template <typename T>
Var<T> crop_top_left(Var<T> m, std::size_t h, std::size_t w);

template <typename T>
Tensor<T> pad_bottom_right_zero(const Tensor<T>& m, std::size_t h, std::size_t w);
template <typename T>
Var<T> pad_bottom_right_zero(Var<T> m, std::size_t h, std::size_t w);

template <typename M>
struct LongSidePadded {
  M map;             // L x L canvas
  ScaledExtent content;  // extent of the resized content at the top-left
};

/// Bilinear (antialiased on downscale) resize of the long side to L followed
/// by bottom/right zero padding to L x L.
template <typename T>
LongSidePadded<Tensor<T>> resize_long_side_pad(const Tensor<T>& m, std::size_t long_side);
template <typename T>
LongSidePadded<Var<T>> resize_long_side_pad(Var<T> m, std::size_t long_side);

/// Separable Gaussian smoothing with reflect padding and adaptive sizing.
template <typename T>
Tensor<T> gaussian_smooth(const Tensor<T>& m, const GaussianSpec& spec);

/// (v - min) / (max - min + eps); constant input maps to zeros.
template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& v, double eps = 1e-8);
template <typename T>
Var<T> minmax_normalize(Var<T> v, double eps = 1e-8);

}  // namespace anchorseg::imaging
