#include "anchorseg/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace anchorseg::imaging {
namespace {

struct GridDims {
  std::size_t c = 1, h = 0, w = 0;
};

GridDims grid_dims(const Shape& s, const char* op) {
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw DimensionError(std::string(op) + ": expected [H,W] or [C,H,W], got " + shape_str(s));
}

Shape grid_shape(const Shape& like, std::size_t h, std::size_t w) {
  if (like.size() == 2) return {h, w};
  return {like[0], h, w};
}

double triangle(double x) {
  x = std::abs(x);
  return x < 1.0 ? 1.0 - x : 0.0;
}

void push_taps(AxisWeights& aw, std::size_t first, std::vector<double> taps) {
  aw.first.push_back(first);
  aw.count.push_back(taps.size());
  aw.offset.push_back(aw.weight.size());
  aw.weight.insert(aw.weight.end(), taps.begin(), taps.end());
}

// Resamples along the last axis: src [rows, aw.in] -> dst [rows, aw.out].
template <typename T>
void apply_cols(const AxisWeights& aw, const T* src, T* dst, std::size_t rows) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* s = src + r * aw.in;
    T* d = dst + r * aw.out;
    for (std::size_t o = 0; o < aw.out; ++o) {
      double acc = 0.0;
      const double* wt = aw.weight.data() + aw.offset[o];
      const T* sp = s + aw.first[o];
      for (std::size_t t = 0; t < aw.count[o]; ++t) acc += wt[t] * static_cast<double>(sp[t]);
      d[o] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void apply_cols_transpose(const AxisWeights& aw, const T* gdst, T* gsrc, std::size_t rows) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* gd = gdst + r * aw.out;
    T* gs = gsrc + r * aw.in;
    for (std::size_t o = 0; o < aw.out; ++o) {
      const double* wt = aw.weight.data() + aw.offset[o];
      T* sp = gs + aw.first[o];
      for (std::size_t t = 0; t < aw.count[o]; ++t) sp[t] += static_cast<T>(wt[t] * static_cast<double>(gd[o]));
    }
  }
}

// Resamples along the middle axis: src [planes, aw.in, width] -> dst [planes, aw.out, width].
template <typename T>
void apply_rows(const AxisWeights& aw, const T* src, T* dst, std::size_t planes, std::size_t width) {
  std::vector<double> acc(width);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* s = src + p * aw.in * width;
    T* d = dst + p * aw.out * width;
    for (std::size_t o = 0; o < aw.out; ++o) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t t = 0; t < aw.count[o]; ++t) {
        const double wt = aw.weight[aw.offset[o] + t];
        const T* row = s + (aw.first[o] + t) * width;
        for (std::size_t x = 0; x < width; ++x) acc[x] += wt * static_cast<double>(row[x]);
      }
      for (std::size_t x = 0; x < width; ++x) d[o * width + x] = static_cast<T>(acc[x]);
    }
  }
}

template <typename T>
void apply_rows_transpose(const AxisWeights& aw, const T* gdst, T* gsrc, std::size_t planes, std::size_t width) {
  for (std::size_t p = 0; p < planes; ++p) {
    const T* gd = gdst + p * aw.out * width;
    T* gs = gsrc + p * aw.in * width;
    for (std::size_t o = 0; o < aw.out; ++o) {
      for (std::size_t t = 0; t < aw.count[o]; ++t) {
        const T wt = static_cast<T>(aw.weight[aw.offset[o] + t]);
        T* row = gs + (aw.first[o] + t) * width;
        const T* grow = gd + o * width;
        for (std::size_t x = 0; x < width; ++x) row[x] += wt * grow[x];
      }
    }
  }
}

struct ResizePlan {
  GridDims in;
  std::size_t out_h = 0, out_w = 0;
  AxisWeights wx, wy;
};

std::shared_ptr<const ResizePlan> make_plan(const Shape& s, std::size_t out_h, std::size_t out_w, bool antialias) {
  if (out_h == 0 || out_w == 0) {
    throw ConfigError("bilinear_resize: target extents must be positive, got " + std::to_string(out_h) + "x" +
                      std::to_string(out_w));
  }
  auto plan = std::make_shared<ResizePlan>();
  plan->in = grid_dims(s, "bilinear_resize");
  plan->out_h = out_h;
  plan->out_w = out_w;
  plan->wx = bilinear_axis_weights(plan->in.w, out_w, antialias);
  plan->wy = bilinear_axis_weights(plan->in.h, out_h, antialias);
  return plan;
}

template <typename T>
Tensor<T> resize_forward(const ResizePlan& plan, const Tensor<T>& m) {
  const auto& d = plan.in;
  std::vector<T> tmp(d.c * d.h * plan.out_w);
  apply_cols(plan.wx, m.data().data(), tmp.data(), d.c * d.h);
  Tensor<T> out(grid_shape(m.shape(), plan.out_h, plan.out_w));
  apply_rows(plan.wy, tmp.data(), out.data().data(), d.c, plan.out_w);
  return out;
}

template <typename T>
void resize_backward(const ResizePlan& plan, const Tensor<T>& g, Tensor<T>& gin) {
  const auto& d = plan.in;
  std::vector<T> tmp(d.c * d.h * plan.out_w, T(0));
  apply_rows_transpose(plan.wy, g.data().data(), tmp.data(), d.c, plan.out_w);
  apply_cols_transpose(plan.wx, tmp.data(), gin.data().data(), d.c * d.h);
}

std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  i = ((i % period) + period) % period;
  if (i >= static_cast<long>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

AxisWeights bilinear_axis_weights(std::size_t in, std::size_t out, bool antialias) {
  if (in == 0 || out == 0) throw ConfigError("bilinear weights need positive extents");
  AxisWeights aw;
  aw.in = in;
  aw.out = out;
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    if (in == out) {
      push_taps(aw, o, {1.0});
    } else if (antialias && in > out) {
      const double support = scale;
      const double center = scale * (static_cast<double>(o) + 0.5);
      const double invscale = 1.0 / scale;
      const long lo = std::max(static_cast<long>(center - support + 0.5), 0L);
      const long hi = std::min(static_cast<long>(center + support + 0.5), static_cast<long>(in));
      std::vector<double> taps;
      double total = 0.0;
      for (long j = lo; j < hi; ++j) {
        const double wv = triangle((static_cast<double>(j) - center + 0.5) * invscale);
        taps.push_back(wv);
        total += wv;
      }
      for (auto& t : taps) t = total > 0.0 ? t / total : 0.0;
      push_taps(aw, static_cast<std::size_t>(lo), std::move(taps));
    } else {
      double src = scale * (static_cast<double>(o) + 0.5) - 0.5;
      if (src < 0.0) src = 0.0;
      const std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
      const double lambda = std::clamp(src - static_cast<double>(i0), 0.0, 1.0);
      if (i0 + 1 < in) {
        push_taps(aw, i0, {1.0 - lambda, lambda});
      } else {
        push_taps(aw, i0, {1.0});
      }
    }
  }
  return aw;
}

std::size_t nearest_source_index(std::size_t o, std::size_t in, std::size_t out) {
  return std::min(o * in / out, in - 1);
}

ScaledExtent long_side_extent(std::size_t h, std::size_t w, std::size_t long_side) {
  if (h == 0 || w == 0 || long_side == 0) throw ConfigError("long_side_extent: extents must be positive");
  const double alpha = static_cast<double>(long_side) / static_cast<double>(std::max(h, w));
  return {static_cast<std::size_t>(std::floor(static_cast<double>(h) * alpha + 0.5)),
          static_cast<std::size_t>(std::floor(static_cast<double>(w) * alpha + 0.5))};
}

GaussianSpec adapted_gaussian(const GaussianSpec& spec, std::size_t h, std::size_t w) {
  if (spec.ksize % 2 == 0 || spec.ksize == 0) throw ConfigError("gaussian ksize must be odd and >= 1");
  if (!(spec.sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  std::size_t bound = std::min(h, w);
  if (bound % 2 == 0) --bound;
  const std::size_t k = std::min(spec.ksize, std::max<std::size_t>(bound, 1));
  return {spec.sigma * static_cast<double>(k) / static_cast<double>(spec.ksize), k};
}

std::vector<double> gaussian_kernel_1d(const GaussianSpec& spec) {
  if (spec.ksize % 2 == 0 || spec.ksize == 0) throw ConfigError("gaussian ksize must be odd and >= 1");
  const long r = static_cast<long>(spec.ksize / 2);
  std::vector<double> g;
  double total = 0.0;
  for (long x = -r; x <= r; ++x) {
    const double v = std::exp(-static_cast<double>(x * x) / (2.0 * spec.sigma * spec.sigma));
    g.push_back(v);
    total += v;
  }
  for (auto& v : g) v /= total;
  return g;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& m, std::size_t out_h, std::size_t out_w, bool antialias) {
  auto plan = make_plan(m.shape(), out_h, out_w, antialias);
  return resize_forward(*plan, m);
}

template <typename T>
Var<T> bilinear_resize(Var<T> m, std::size_t out_h, std::size_t out_w, bool antialias) {
  auto plan = make_plan(m.shape(), out_h, out_w, antialias);
  const auto id = m.id;
  return m.tape->record(resize_forward(*plan, m.value()), {id}, [plan, id](Tape<T>& tape, std::size_t self) {
    resize_backward(*plan, tape.grad(self), tape.grad_buffer(id));
  });
}

template <typename T>
Tensor<T> nearest_resize(const Tensor<T>& m, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ConfigError("nearest_resize: target extents must be positive");
  const auto d = grid_dims(m.shape(), "nearest_resize");
  Tensor<T> out(grid_shape(m.shape(), out_h, out_w));
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t y = 0; y < out_h; ++y) {
      const std::size_t sy = nearest_source_index(y, d.h, out_h);
      for (std::size_t x = 0; x < out_w; ++x) {
        const std::size_t sx = nearest_source_index(x, d.w, out_w);
        out[(c * out_h + y) * out_w + x] = m[(c * d.h + sy) * d.w + sx];
      }
    }
  return out;
}

template <typename T>
Tensor<T> crop_top_left(const Tensor<T>& m, std::size_t h, std::size_t w) {
  const auto d = grid_dims(m.shape(), "crop_top_left");
  if (h > d.h || w > d.w || h == 0 || w == 0) {
    throw ContractError("crop_top_left: " + std::to_string(h) + "x" + std::to_string(w) + " from " +
                        shape_str(m.shape()));
  }
  Tensor<T> out(grid_shape(m.shape(), h, w));
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(m.data().begin() + (c * d.h + y) * d.w, w, out.data().begin() + (c * h + y) * w);
  return out;
}

template <typename T>
Var<T> crop_top_left(Var<T> m, std::size_t h, std::size_t w) {
  const auto d = grid_dims(m.shape(), "crop_top_left");
  const auto id = m.id;
  return m.tape->record(crop_top_left(m.value(), h, w), {id}, [d, h, w, id](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    auto& gi = tape.grad_buffer(id);
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) gi[(c * d.h + y) * d.w + x] += g[(c * h + y) * w + x];
  });
}

template <typename T>
Tensor<T> pad_bottom_right_zero(const Tensor<T>& m, std::size_t h, std::size_t w) {
  const auto d = grid_dims(m.shape(), "pad_bottom_right_zero");
  if (h < d.h || w < d.w) {
    throw ContractError("pad_bottom_right_zero: target " + std::to_string(h) + "x" + std::to_string(w) +
                        " smaller than " + shape_str(m.shape()));
  }
  Tensor<T> out(grid_shape(m.shape(), h, w));
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t y = 0; y < d.h; ++y)
      std::copy_n(m.data().begin() + (c * d.h + y) * d.w, d.w, out.data().begin() + (c * h + y) * w);
  return out;
}

template <typename T>
Var<T> pad_bottom_right_zero(Var<T> m, std::size_t h, std::size_t w) {
  const auto d = grid_dims(m.shape(), "pad_bottom_right_zero");
  const auto id = m.id;
  return m.tape->record(pad_bottom_right_zero(m.value(), h, w), {id}, [d, h, w, id](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    auto& gi = tape.grad_buffer(id);
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t y = 0; y < d.h; ++y)
        for (std::size_t x = 0; x < d.w; ++x) gi[(c * d.h + y) * d.w + x] += g[(c * h + y) * w + x];
  });
}

template <typename T>
LongSidePadded<Tensor<T>> resize_long_side_pad(const Tensor<T>& m, std::size_t long_side) {
  const auto d = grid_dims(m.shape(), "resize_long_side_pad");
  const auto ext = long_side_extent(d.h, d.w, long_side);
  auto resized = bilinear_resize(m, ext.h, ext.w, true);
  return {pad_bottom_right_zero(resized, long_side, long_side), ext};
}

template <typename T>
LongSidePadded<Var<T>> resize_long_side_pad(Var<T> m, std::size_t long_side) {
  const auto d = grid_dims(m.shape(), "resize_long_side_pad");
  const auto ext = long_side_extent(d.h, d.w, long_side);
  auto resized = bilinear_resize(m, ext.h, ext.w, true);
  return {pad_bottom_right_zero(resized, long_side, long_side), ext};
}

template <typename T>
Tensor<T> gaussian_smooth(const Tensor<T>& m, const GaussianSpec& spec) {
  const auto d = grid_dims(m.shape(), "gaussian_smooth");
  const auto eff = adapted_gaussian(spec, d.h, d.w);
  if (eff.ksize == 1) return m;
  const auto g = gaussian_kernel_1d(eff);
  const std::size_t k = eff.ksize, r = k / 2;
  // taps[i * k + t]: source index of tap t for output position i along one axis
  auto taps = [k, r](std::size_t n) {
    std::vector<std::size_t> idx(n * k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < k; ++t)
        idx[i * k + t] = reflect_index(static_cast<long>(i + t) - static_cast<long>(r), n);
    return idx;
  };
  const auto tx = taps(d.w), ty = taps(d.h);
  std::vector<double> tmp(m.size());
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t y = 0; y < d.h; ++y) {
      const std::size_t row = (c * d.h + y) * d.w;
      for (std::size_t x = 0; x < d.w; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) acc += g[t] * static_cast<double>(m[row + tx[x * k + t]]);
        tmp[row + x] = acc;
      }
    }
  Tensor<T> out(m.shape());
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) acc += g[t] * tmp[(c * d.h + ty[y * k + t]) * d.w + x];
        out[(c * d.h + y) * d.w + x] = static_cast<T>(acc);
      }
  return out;
}

template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& v, double eps) {
  Tensor<T> out(v.shape());
  if (v.empty()) return out;
  const auto [mn_it, mx_it] = std::minmax_element(v.data().begin(), v.data().end());
  const T mn = *mn_it;
  const T denom = static_cast<T>(static_cast<double>(*mx_it - mn) + eps);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mn) / denom;
  return out;
}

template <typename T>
Var<T> minmax_normalize(Var<T> v, double eps) {
  const auto& x = v.value();
  if (x.empty()) throw ContractError("minmax_normalize of empty tensor");
  const auto [mn_it, mx_it] = std::minmax_element(x.data().begin(), x.data().end());
  const std::size_t imin = static_cast<std::size_t>(mn_it - x.data().begin());
  const std::size_t imax = static_cast<std::size_t>(mx_it - x.data().begin());
  const T denom = static_cast<T>(static_cast<double>(*mx_it - *mn_it) + eps);
  const auto id = v.id;
  return v.tape->record(minmax_normalize(x, eps), {id}, [id, imin, imax, denom](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    const auto& y = tape.value(self);
    auto& gi = tape.grad_buffer(id);
    T to_min = T(0), to_max = T(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gi[i] += g[i] / denom;
      to_min += g[i] * (y[i] - T(1));
      to_max -= g[i] * y[i];
    }
    gi[imin] += to_min / denom;
    gi[imax] += to_max / denom;
  });
}

#define ANCHORSEG_INSTANTIATE_IMAGING(T)                                                                  \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t, bool);                   \
  template Var<T> bilinear_resize(Var<T>, std::size_t, std::size_t, bool);                                 \
  template Tensor<T> nearest_resize(const Tensor<T>&, std::size_t, std::size_t);                           \
  template Tensor<T> crop_top_left(const Tensor<T>&, std::size_t, std::size_t);                            \
  template Var<T> crop_top_left(Var<T>, std::size_t, std::size_t);                                         \
  template Tensor<T> pad_bottom_right_zero(const Tensor<T>&, std::size_t, std::size_t);                    \
  template Var<T> pad_bottom_right_zero(Var<T>, std::size_t, std::size_t);                                 \
  template LongSidePadded<Tensor<T>> resize_long_side_pad(const Tensor<T>&, std::size_t);                  \
  template LongSidePadded<Var<T>> resize_long_side_pad(Var<T>, std::size_t);                               \
  template Tensor<T> gaussian_smooth(const Tensor<T>&, const GaussianSpec&);                               \
  template Tensor<T> minmax_normalize(const Tensor<T>&, double);                                           \
  template Var<T> minmax_normalize(Var<T>, double);

ANCHORSEG_INSTANTIATE_IMAGING(float)
ANCHORSEG_INSTANTIATE_IMAGING(double)

}  // namespace anchorseg::imaging
