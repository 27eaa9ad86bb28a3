#include "anchorseg/ops.hpp"

#include <algorithm>
#include <cmath>

namespace anchorseg::ops {
namespace {

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_matrix(const Shape& s, const char* op) {
  if (s.size() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(s));
}

// c[m,n] (+)= a[m,k] * b[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F forward, D derivative) {
  const auto& x = a.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = forward(x[i]);
  const auto aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid, derivative](Tape<T>& tape, std::size_t self) {
    if (!tape.requires_grad(aid)) return;
    const auto& g = tape.grad(self);
    const auto& y = tape.value(self);
    const auto& xv = tape.value(aid);
    auto& ga = tape.grad_buffer(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * derivative(xv[i], y[i]);
  });
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t stride) { return (in - 1) / stride + 1; }

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out(Shape{m, n});
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const auto aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid, m, k, n](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    if (tape.requires_grad(aid)) {
      // dA = dC * B^T
      gemm_nt(g.data().data(), tape.value(bid).data().data(), tape.grad_buffer(aid).data().data(), m, n, k);
    }
    if (tape.requires_grad(bid)) {
      // dB = A^T * dC
      gemm_tn(tape.value(aid).data().data(), g.data().data(), tape.grad_buffer(bid).data().data(), m, k, n);
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const auto& x = a.value();
  require_matrix(x.shape(), "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor<T> out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  const auto aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid, m, n](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    auto& ga = tape.grad_buffer(aid);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  const auto aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    tape.accumulate(aid, g);
    tape.accumulate(bid, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    tape.accumulate(aid, g);
    if (tape.requires_grad(bid)) {
      auto& gb = tape.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    if (tape.requires_grad(aid)) {
      auto& ga = tape.grad_buffer(aid);
      const auto& bv = tape.value(bid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tape.requires_grad(bid)) {
      auto& gb = tape.grad_buffer(bid);
      const auto& av = tape.value(aid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  return unary(
      a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T offset) {
  return unary(
      a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const auto& x = a.value();
  T s = T(0);
  for (auto v : x.data()) s += v;
  const auto aid = a.id;
  return a.tape->record(Tensor<T>::scalar(s), {aid}, [aid](Tape<T>& tape, std::size_t self) {
    const T g = tape.grad(self)[0];
    auto& ga = tape.grad_buffer(aid);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.size();
  if (n == 0) throw ContractError("mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> add_rowwise(Var<T> x, Var<T> b) {
  const auto& xv = x.value();
  const auto& bv = b.value();
  require_matrix(xv.shape(), "add_rowwise");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (bv.size() != n || (bv.rank() == 2 && bv.dim(0) != 1) || bv.rank() > 2) {
    throw DimensionError("add_rowwise: bias " + shape_str(bv.shape()) + " for rows of " + shape_str(xv.shape()));
  }
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  const auto xid = x.id, bid = b.id;
  return x.tape->record(std::move(out), {xid, bid}, [xid, bid, m, n](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    tape.accumulate(xid, g);
    if (tape.requires_grad(bid)) {
      auto& gb = tape.grad_buffer(bid);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

template <typename T>
Var<T> mean_rows(Var<T> x) {
  const auto& xv = x.value();
  require_matrix(xv.shape(), "mean_rows");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (m == 0) throw ContractError("mean_rows of zero rows");
  Tensor<T> out(Shape{1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  const T inv = T(1) / static_cast<T>(m);
  for (auto& v : out.data()) v *= inv;
  const auto xid = x.id;
  return x.tape->record(std::move(out), {xid}, [xid, m, n, inv](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    auto& gx = tape.grad_buffer(xid);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j] * inv;
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  const auto& x = a.value();
  require_matrix(x.shape(), "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data().data() + i * n;
    T* orow = out.data().data() + i * n;
    const T mx = *std::max_element(row, row + n);
    T z = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= z;
  }
  const auto aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid, m, n](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    const auto& y = tape.value(self);
    auto& ga = tape.grad_buffer(aid);
    for (std::size_t i = 0; i < m; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const auto aid = a.id;
  return a.tape->record(std::move(out), {aid}, [aid](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    auto& ga = tape.grad_buffer(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& x = a.value();
  require_matrix(x.shape(), "slice_rows");
  if (begin > end || end > x.dim(0)) {
    throw ContractError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                        shape_str(x.shape()));
  }
  const std::size_t n = x.dim(1);
  std::vector<T> data(x.data().begin() + begin * n, x.data().begin() + end * n);
  const auto aid = a.id;
  return a.tape->record(Tensor<T>(Shape{end - begin, n}, std::move(data)), {aid},
                        [aid, begin, n](Tape<T>& tape, std::size_t self) {
                          const auto& g = tape.grad(self);
                          auto& ga = tape.grad_buffer(aid);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
                        });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t n = parts.front().value().rank() == 2 ? parts.front().value().dim(1) : 0;
  std::vector<T> data;
  std::vector<std::size_t> ids;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    require_matrix(v.shape(), "concat_rows");
    if (v.dim(1) != n) throw DimensionError("concat_rows: column mismatch " + shape_str(v.shape()));
    data.insert(data.end(), v.data().begin(), v.data().end());
    ids.push_back(p.id);
    rows += v.dim(0);
  }
  return parts.front().tape->record(Tensor<T>(Shape{rows, n}, std::move(data)), ids,
                                    [ids](Tape<T>& tape, std::size_t self) {
                                      const auto& g = tape.grad(self);
                                      std::size_t offset = 0;
                                      for (auto id : ids) {
                                        const std::size_t len = tape.value(id).size();
                                        if (tape.requires_grad(id)) {
                                          auto& gp = tape.grad_buffer(id);
                                          for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
                                        }
                                        offset += len;
                                      }
                                    });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_matrix(av.shape(), "concat_cols");
  require_matrix(bv.shape(), "concat_cols");
  if (av.dim(0) != bv.dim(0)) {
    throw DimensionError("concat_cols: row mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), na = av.dim(1), nb = bv.dim(1);
  Tensor<T> out(Shape{m, na + nb});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(av.data().begin() + i * na, na, out.data().begin() + i * (na + nb));
    std::copy_n(bv.data().begin() + i * nb, nb, out.data().begin() + i * (na + nb) + na);
  }
  const auto aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {aid, bid}, [aid, bid, m, na, nb](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    if (tape.requires_grad(aid)) {
      auto& ga = tape.grad_buffer(aid);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < na; ++j) ga[i * na + j] += g[i * (na + nb) + j];
    }
    if (tape.requires_grad(bid)) {
      auto& gb = tape.grad_buffer(bid);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nb; ++j) gb[i * nb + j] += g[i * (na + nb) + na + j];
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_channels of nothing");
  const Shape& first = parts.front().shape();
  if (first.size() != 3) throw DimensionError("concat_channels: expected [C,H,W], got " + shape_str(first));
  std::vector<T> data;
  std::vector<std::size_t> ids;
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.shape() != first) {
      throw DimensionError("concat_channels: heterogeneous shapes " + shape_str(first) + " vs " +
                           shape_str(p.shape()));
    }
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    ids.push_back(p.id);
    channels += first[0];
  }
  return parts.front().tape->record(Tensor<T>(Shape{channels, first[1], first[2]}, std::move(data)), ids,
                                    [ids](Tape<T>& tape, std::size_t self) {
                                      const auto& g = tape.grad(self);
                                      std::size_t offset = 0;
                                      for (auto id : ids) {
                                        const std::size_t len = tape.value(id).size();
                                        if (tape.requires_grad(id)) {
                                          auto& gp = tape.grad_buffer(id);
                                          for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
                                        }
                                        offset += len;
                                      }
                                    });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  return add_rowwise(matmul(x, w), b);
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernels, Var<T> bias, std::size_t stride) {
  const auto& in = input.value();
  const auto& k = kernels.value();
  const auto& bv = bias.value();
  if (in.rank() != 3 || k.rank() != 4) {
    throw DimensionError("conv2d: input " + shape_str(in.shape()) + ", kernels " + shape_str(k.shape()));
  }
  const std::size_t cin = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError("conv2d: kernel extents must be odd, got " + shape_str(k.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  if (k.dim(1) != cin) {
    throw DimensionError("conv2d: kernels " + shape_str(k.shape()) + " for input " + shape_str(in.shape()));
  }
  if (bv.size() != cout) throw DimensionError("conv2d: bias " + shape_str(bv.shape()) + " for " + std::to_string(cout) + " channels");
  const std::size_t ho = conv_output_extent(h, stride), wo = conv_output_extent(w, stride);
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);

  // Visits every (output pixel, input pixel, kernel tap) triple that lies inside the input.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t i = 0; i < kh; ++i)
          for (std::size_t j = 0; j < kw; ++j) {
            const std::size_t kidx = ((o * cin + c) * kh + i) * kw + j;
            for (std::size_t y = 0; y < ho; ++y) {
              const long iy = static_cast<long>(y * stride + i) - ph;
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              // valid x: 0 <= x*stride + j - pw < w
              const long jj = static_cast<long>(j) - pw;
              std::size_t x0 = jj >= 0 ? 0 : static_cast<std::size_t>((-jj + static_cast<long>(stride) - 1) / static_cast<long>(stride));
              const long lim = static_cast<long>(w) - 1 - jj;
              if (lim < 0) continue;
              std::size_t x1 = std::min(wo, static_cast<std::size_t>(lim / static_cast<long>(stride)) + 1);
              const std::size_t in_row = (c * h + static_cast<std::size_t>(iy)) * w;
              const std::size_t out_row = (o * ho + y) * wo;
              fn(kidx, in_row, out_row, x0, x1, jj);
            }
          }
  };

  Tensor<T> out(Shape{cout, ho, wo});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t p = 0; p < ho * wo; ++p) out[o * ho * wo + p] = bv[o];
  {
    const T* ip = in.data().data();
    const T* kp = k.data().data();
    T* op = out.data().data();
    for_each_tap([&](std::size_t kidx, std::size_t in_row, std::size_t out_row, std::size_t x0, std::size_t x1, long jj) {
      const T wv = kp[kidx];
      for (std::size_t x = x0; x < x1; ++x) op[out_row + x] += wv * ip[in_row + static_cast<std::size_t>(static_cast<long>(x * stride) + jj)];
    });
  }

  const auto iid = input.id, kid = kernels.id, bid = bias.id;
  return input.tape->record(
      std::move(out), {iid, kid, bid},
      [=](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self);
        const T* gp = g.data().data();
        if (tape.requires_grad(bid)) {
          auto& gb = tape.grad_buffer(bid);
          for (std::size_t o = 0; o < cout; ++o) {
            T acc = T(0);
            for (std::size_t p = 0; p < ho * wo; ++p) acc += gp[o * ho * wo + p];
            gb[o] += acc;
          }
        }
        const bool need_in = tape.requires_grad(iid);
        const bool need_k = tape.requires_grad(kid);
        if (!need_in && !need_k) return;
        const T* ip = tape.value(iid).data().data();
        const T* kp = tape.value(kid).data().data();
        T* gi = need_in ? tape.grad_buffer(iid).data().data() : nullptr;
        T* gk = need_k ? tape.grad_buffer(kid).data().data() : nullptr;
        for_each_tap([&](std::size_t kidx, std::size_t in_row, std::size_t out_row, std::size_t x0, std::size_t x1, long jj) {
          const T wv = kp[kidx];
          T acc = T(0);
          for (std::size_t x = x0; x < x1; ++x) {
            const std::size_t ii = in_row + static_cast<std::size_t>(static_cast<long>(x * stride) + jj);
            const T gv = gp[out_row + x];
            if (gi) gi[ii] += wv * gv;
            acc += gv * ip[ii];
          }
          if (gk) gk[kidx] += acc;
        });
      });
}

template <typename T>
Var<T> detach(Var<T> a) {
  return a.tape->constant(a.value());
}

#define ANCHORSEG_INSTANTIATE_OPS(T)                                                  \
  template Var<T> matmul(Var<T>, Var<T>);                                             \
  template Var<T> transpose(Var<T>);                                                  \
  template Var<T> add(Var<T>, Var<T>);                                                \
  template Var<T> sub(Var<T>, Var<T>);                                                \
  template Var<T> mul(Var<T>, Var<T>);                                                \
  template Var<T> scale(Var<T>, T);                                                   \
  template Var<T> add_scalar(Var<T>, T);                                              \
  template Var<T> sigmoid(Var<T>);                                                    \
  template Var<T> relu(Var<T>);                                                       \
  template Var<T> tanh(Var<T>);                                                       \
  template Var<T> sum(Var<T>);                                                        \
  template Var<T> mean(Var<T>);                                                       \
  template Var<T> add_rowwise(Var<T>, Var<T>);                                        \
  template Var<T> mean_rows(Var<T>);                                                  \
  template Var<T> softmax_rows(Var<T>);                                               \
  template Var<T> reshape(Var<T>, Shape);                                             \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                       \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                            \
  template Var<T> concat_cols(Var<T>, Var<T>);                                        \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                        \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                     \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t);                        \
  template Var<T> detach(Var<T>);

ANCHORSEG_INSTANTIATE_OPS(float)
ANCHORSEG_INSTANTIATE_OPS(double)

}  // namespace anchorseg::ops
