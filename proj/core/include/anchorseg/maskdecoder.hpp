#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "anchorseg/tape.hpp"

// Miniature two-way transformer mask decoder conditioned on an ordered query
// matrix whose last row is the anchor slot.
namespace anchorseg::maskdecoder {

struct DecoderDims {
  std::size_t d = 32;          // query width
  std::size_t channels = 16;   // C
  std::size_t ffn_hidden = 32;
  std::size_t blocks = 2;
};

template <typename T>
struct DecoderBlock {
  // queries -> pixels
  Parameter<T>* q2p_q = nullptr;
  Parameter<T>* q2p_k = nullptr;
  Parameter<T>* q2p_v = nullptr;
  // feed-forward on queries
  Parameter<T>* ffn_w1 = nullptr;
  Parameter<T>* ffn_b1 = nullptr;
  Parameter<T>* ffn_w2 = nullptr;
  Parameter<T>* ffn_b2 = nullptr;
  // pixels -> queries
  Parameter<T>* p2q_q = nullptr;
  Parameter<T>* p2q_k = nullptr;
  Parameter<T>* p2q_v = nullptr;
};

template <typename T>
struct DecoderParams {
  DecoderDims dims;
  Parameter<T>* query_w = nullptr;  // [d, C]
  Parameter<T>* query_b = nullptr;  // [C]
  std::vector<DecoderBlock<T>> blocks;
  Parameter<T>* out_w = nullptr;  // [C, C], applied to the anchor slot
  Parameter<T>* out_b = nullptr;  // [C]

  static DecoderParams create(ParameterStore<T>& store, const DecoderDims& dims, std::mt19937_64& rng,
                              const std::string& prefix = "decoder");
};

template <typename T>
struct DecodeResult {
  Var<T> logits;  // [H, W] low-resolution mask logits
  std::vector<Var<T>> attention;  // per block: q->p [Q, HW], then p->q [HW, Q]
};

/// Fixed 2-D sinusoidal code [H*W, C]: first half of channels encode the row,
/// second half the column.
template <typename T>
Tensor<T> pixel_positional_encoding(std::size_t h, std::size_t w, std::size_t channels);

/// features [C,H,W]; queries [Q,d] with the anchor as the last row.
template <typename T>
DecodeResult<T> decode_conditioned(Var<T> features, Var<T> queries, const DecoderParams<T>& params);

/// Single segmentation query ([1,d] or [d]) and no prior: the baseline path.
template <typename T>
DecodeResult<T> decode_vanilla(Var<T> features, Var<T> q_seg, const DecoderParams<T>& params);

/// Bilinear (half-pixel) upsampling of low-resolution logits to the L_sam
/// canvas, removal of the bottom/right padding, and a resize to h x w.
template <typename T>
Var<T> postprocess_logits(Var<T> lowres, std::size_t h, std::size_t w, std::size_t l_sam);

}  // namespace anchorseg::maskdecoder
