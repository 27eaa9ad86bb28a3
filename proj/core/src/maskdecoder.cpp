#include "anchorseg/maskdecoder.hpp"

#include <cmath>

#include "anchorseg/imaging.hpp"
#include "anchorseg/init.hpp"
#include "anchorseg/ops.hpp"

namespace anchorseg::maskdecoder {
namespace {

template <typename T>
Var<T> attend(Var<T> queries, Var<T> keys, Var<T> values, T inv_sqrt, std::vector<Var<T>>& trace) {
  auto scores = ops::scale(ops::matmul(queries, ops::transpose(keys)), inv_sqrt);
  auto attn = ops::softmax_rows(scores);
  trace.push_back(attn);
  return ops::matmul(attn, values);
}

}  // namespace

template <typename T>
DecoderParams<T> DecoderParams<T>::create(ParameterStore<T>& store, const DecoderDims& dims, std::mt19937_64& rng,
                                          const std::string& prefix) {
  const std::size_t c = dims.channels;
  DecoderParams p;
  p.dims = dims;
  p.query_w = &store.add(prefix + ".query_w", fan_in_tensor<T>({dims.d, c}, dims.d, rng));
  p.query_b = &store.add(prefix + ".query_b", Tensor<T>({c}));
  for (std::size_t b = 0; b < dims.blocks; ++b) {
    const auto tag = prefix + ".block" + std::to_string(b);
    DecoderBlock<T> blk;
    blk.q2p_q = &store.add(tag + ".q2p_q", fan_in_tensor<T>({c, c}, c, rng));
    blk.q2p_k = &store.add(tag + ".q2p_k", fan_in_tensor<T>({c, c}, c, rng));
    blk.q2p_v = &store.add(tag + ".q2p_v", fan_in_tensor<T>({c, c}, c, rng));
    blk.ffn_w1 = &store.add(tag + ".ffn_w1", fan_in_tensor<T>({c, dims.ffn_hidden}, c, rng));
    blk.ffn_b1 = &store.add(tag + ".ffn_b1", Tensor<T>({dims.ffn_hidden}));
    blk.ffn_w2 = &store.add(tag + ".ffn_w2", fan_in_tensor<T>({dims.ffn_hidden, c}, dims.ffn_hidden, rng));
    blk.ffn_b2 = &store.add(tag + ".ffn_b2", Tensor<T>({c}));
    blk.p2q_q = &store.add(tag + ".p2q_q", fan_in_tensor<T>({c, c}, c, rng));
    blk.p2q_k = &store.add(tag + ".p2q_k", fan_in_tensor<T>({c, c}, c, rng));
    blk.p2q_v = &store.add(tag + ".p2q_v", fan_in_tensor<T>({c, c}, c, rng));
    p.blocks.push_back(blk);
  }
  p.out_w = &store.add(prefix + ".out_w", fan_in_tensor<T>({c, c}, c, rng));
  p.out_b = &store.add(prefix + ".out_b", Tensor<T>({c}));
  return p;
}

template <typename T>
Tensor<T> pixel_positional_encoding(std::size_t h, std::size_t w, std::size_t channels) {
  Tensor<T> pe({h * w, channels});
  const std::size_t half = channels / 2;
  auto encode = [](std::size_t pos, std::size_t k, std::size_t width) {
    // channel pairs (sin, cos) with geometrically spaced frequencies
    const std::size_t pair = k / 2;
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(pair) / static_cast<double>(std::max<std::size_t>(width, 1)));
    const double a = static_cast<double>(pos) * freq;
    return k % 2 == 0 ? std::sin(a) : std::cos(a);
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      auto row = pe.data().subspan((y * w + x) * channels, channels);
      for (std::size_t k = 0; k < half; ++k) row[k] = static_cast<T>(encode(y, k, half));
      for (std::size_t k = half; k < channels; ++k) row[k] = static_cast<T>(encode(x, k - half, channels - half));
    }
  return pe;
}

template <typename T>
DecodeResult<T> decode_conditioned(Var<T> features, Var<T> queries, const DecoderParams<T>& params) {
  const auto& fs = features.shape();
  const auto& qs = queries.shape();
  const std::size_t c = params.dims.channels;
  if (fs.size() != 3 || fs[0] != c) {
    throw DimensionError("decode: features " + shape_str(fs) + " for " + std::to_string(c) + " channels");
  }
  if (qs.size() != 2 || qs[0] < 1) throw ContractError("decode: query matrix " + shape_str(qs) + " has no anchor row");
  if (qs[1] != params.dims.d) throw DimensionError("decode: queries " + shape_str(qs) + " for width " + std::to_string(params.dims.d));
  auto& tape = *features.tape;
  const std::size_t h = fs[1], w = fs[2], nq = qs[0];
  const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(c)));
  auto P = [&tape](Parameter<T>* p) { return tape.param(*p); };

  DecodeResult<T> out;
  auto x = ops::transpose(ops::reshape(features, {c, h * w}));  // [HW, C]
  x = ops::add(x, tape.constant(pixel_positional_encoding<T>(h, w, c)));
  auto q = ops::linear(queries, P(params.query_w), P(params.query_b));  // [Q, C]

  for (const auto& blk : params.blocks) {
    auto upd_q = attend(ops::matmul(q, P(blk.q2p_q)), ops::matmul(x, P(blk.q2p_k)), ops::matmul(x, P(blk.q2p_v)),
                        inv_sqrt, out.attention);
    q = ops::add(q, upd_q);
    auto hidden = ops::relu(ops::linear(q, P(blk.ffn_w1), P(blk.ffn_b1)));
    q = ops::add(q, ops::linear(hidden, P(blk.ffn_w2), P(blk.ffn_b2)));
    auto upd_x = attend(ops::matmul(x, P(blk.p2q_q)), ops::matmul(q, P(blk.p2q_k)), ops::matmul(q, P(blk.p2q_v)),
                        inv_sqrt, out.attention);
    x = ops::add(x, upd_x);
  }

  auto anchor = ops::slice_rows(q, nq - 1, nq);
  auto head = ops::linear(anchor, P(params.out_w), P(params.out_b));  // [1, C]
  out.logits = ops::reshape(ops::matmul(x, ops::transpose(head)), {h, w});
  return out;
}

template <typename T>
DecodeResult<T> decode_vanilla(Var<T> features, Var<T> q_seg, const DecoderParams<T>& params) {
  return decode_conditioned(features, ops::reshape(q_seg, {1, q_seg.size()}), params);
}

template <typename T>
Var<T> postprocess_logits(Var<T> lowres, std::size_t h, std::size_t w, std::size_t l_sam) {
  auto canvas = imaging::bilinear_resize(lowres, l_sam, l_sam, false);
  const auto ext = imaging::long_side_extent(h, w, l_sam);
  auto content = imaging::crop_top_left(canvas, ext.h, ext.w);
  return imaging::bilinear_resize(content, h, w, false);
}

#define ANCHORSEG_INSTANTIATE_DECODER(T)                                                   \
  template struct DecoderParams<T>;                                                      \
  template Tensor<T> pixel_positional_encoding(std::size_t, std::size_t, std::size_t);   \
  template DecodeResult<T> decode_conditioned(Var<T>, Var<T>, const DecoderParams<T>&);  \
  template DecodeResult<T> decode_vanilla(Var<T>, Var<T>, const DecoderParams<T>&);      \
  template Var<T> postprocess_logits(Var<T>, std::size_t, std::size_t, std::size_t);

ANCHORSEG_INSTANTIATE_DECODER(float)
ANCHORSEG_INSTANTIATE_DECODER(double)

}  // namespace anchorseg::maskdecoder
