#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "anchorseg/tape.hpp"

// Ordered language-grounded query bank (q_1..q_K, q_anc) produced by a small
// recurrent reasoner that stands in for the multimodal language model.
namespace anchorseg::querybank {

struct ReasonerDims {
  std::size_t vocab = 16;
  std::size_t d_lm = 64;
  std::size_t d = 32;
  std::size_t contextual = 7;  // K
  std::size_t anchors = 1;     // T anchor heads, all conditioned on h_K
};

/// Non-owning views into a ParameterStore.
template <typename T>
struct ReasonerParams {
  ReasonerDims dims;
  Parameter<T>* embed = nullptr;   // [vocab, d_lm]
  Parameter<T>* init_w = nullptr;  // [d_lm, d_lm]
  Parameter<T>* init_b = nullptr;  // [d_lm]
  std::vector<Parameter<T>*> step_w;  // K x [2 d_lm, d_lm]
  std::vector<Parameter<T>*> step_b;  // K x [d_lm]
  std::vector<Parameter<T>*> anchor_w;  // T x [2 d_lm, d_lm]
  std::vector<Parameter<T>*> anchor_b;  // T x [d_lm]
  Parameter<T>* phi_w1 = nullptr;  // [d_lm, d_lm]
  Parameter<T>* phi_b1 = nullptr;  // [d_lm]
  Parameter<T>* phi_w2 = nullptr;  // [d_lm, d]
  Parameter<T>* phi_b2 = nullptr;  // [d]

  static ReasonerParams create(ParameterStore<T>& store, const ReasonerDims& dims, std::mt19937_64& rng,
                               const std::string& prefix = "reasoner");
};

/// Learnable p_1..p_{K+T}; zero-initialized.
template <typename T>
struct PositionalTable {
  Parameter<T>* table = nullptr;  // [K+T, d]

  static PositionalTable create(ParameterStore<T>& store, std::size_t rows, std::size_t d,
                                const std::string& name = "positional");
};

/// Final hidden states of the reasoner, each [1, d_lm].
template <typename T>
struct HiddenStates {
  Var<T> pooled;
  Var<T> initial;  // h_0
  std::vector<Var<T>> contextual;  // h_1..h_K
  std::vector<Var<T>> anchors;     // h_anc (one per anchor head)
};

/// Projected queries, each [1, d].
template <typename T>
struct QueryBank {
  std::vector<Var<T>> contextual;
  std::vector<Var<T>> anchors;

  std::size_t size() const { return contextual.size() + anchors.size(); }
};

/// Runs the reasoner. h_0 = affine(mean symbol embedding);
/// h_k = tanh(affine_k(h_{k-1} || pooled)); h_anc = affine_anc(h_K || pooled),
/// with pooled = mean over image tokens.
template <typename T>
HiddenStates<T> generate_query_bank(Var<T> image_tokens, std::span<const std::uint16_t> symbols,
                                    const ReasonerParams<T>& params);

/// Two affine layers with relu between: d_lm -> d_lm -> d.
template <typename T>
Var<T> project_phi(Var<T> hidden, const ReasonerParams<T>& params);

template <typename T>
QueryBank<T> project_bank(const HiddenStates<T>& hidden, const ReasonerParams<T>& params);

/// Row k = q_k + p_k in bank order (anchors last). With include_contextual
/// false only the anchor rows remain, each keeping its own positional entry.
template <typename T>
Var<T> add_positional(const QueryBank<T>& bank, Var<T> table, bool include_contextual = true);

}  // namespace anchorseg::querybank
