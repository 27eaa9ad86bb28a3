#pragma once

#include <cstddef>
#include <vector>

#include "anchorseg/tape.hpp"

// Differentiable primitives. Shapes must match exactly; the only implicit
// broadcast is a scalar factor in scale()/add_scalar(). Row-bias addition is
// its own explicit op.
namespace anchorseg::ops {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
template <typename T>
Var<T> transpose(Var<T> a);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> add_scalar(Var<T> a, T offset);

template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> relu(Var<T> a);
template <typename T>
Var<T> tanh(Var<T> a);

template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> mean(Var<T> a);

/// x[m,n] + b[n] (or b[1,n]) added to every row.
template <typename T>
Var<T> add_rowwise(Var<T> x, Var<T> b);
/// Column means of x[m,n] as [1,n].
template <typename T>
Var<T> mean_rows(Var<T> x);
/// Softmax along the last axis of a matrix.
template <typename T>
Var<T> softmax_rows(Var<T> a);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);
template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t end);
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b);
/// Stacks same-shaped [C,H,W] maps along the channel axis.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

/// Affine layer on row vectors: x[m,in]·w[in,out] + b[out].
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b);

/// Stride-s cross-correlation with zero "same" padding of (k-1)/2.
/// input [Cin,H,W], kernels [Cout,Cin,kh,kw], bias [Cout] -> [Cout, (H-1)/s+1, (W-1)/s+1].
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernels, Var<T> bias, std::size_t stride = 1);

/// conv2d with stride 1, so output extents equal input extents.
template <typename T>
Var<T> conv2d_same(Var<T> input, Var<T> kernels, Var<T> bias) {
  return conv2d(input, kernels, bias, 1);
}

/// Copy of the value with no gradient path.
template <typename T>
Var<T> detach(Var<T> a);

std::size_t conv_output_extent(std::size_t in, std::size_t stride);

}  // namespace anchorseg::ops
