#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "anchorseg/evalbench/config.hpp"
#include "anchorseg/evalbench/metrics.hpp"
#include "anchorseg/evalbench/scene.hpp"
#include "anchorseg/grounding.hpp"
#include "anchorseg/maskdecoder.hpp"
#include "anchorseg/objectives.hpp"
#include "anchorseg/querybank.hpp"

namespace anchorseg::evalbench {

/// Everything a forward pass needs from one scene, computed once per dataset:
/// frozen encoder outputs and the detached soft targets.
template <typename T>
struct PreparedSample {
  std::size_t index = 0;  // position in the dataset
  Tensor<T> tokens;       // [N, d_lm]
  Tensor<T> features;     // [C, H, W]
  Tensor<T> mask;         // [h, w] in {0,1}
  Tensor<T> m_sigma;      // [h, w]
  Tensor<T> m_down;       // [N]
  std::vector<std::uint16_t> symbols;
  bool is_null = false;
  Mask gt;
};

template <typename T>
struct PreparedData {
  std::vector<PreparedSample<T>> train;
  std::vector<PreparedSample<T>> eval;
};

/// Checks that the dataset header agrees with the model section of cfg.
void check_dataset_matches(const Dataset& data, const RunConfig& cfg);

template <typename T>
PreparedSample<T> prepare_sample(const SceneSample& scene, std::size_t index, const RunConfig& cfg);

/// Encodes every scene and splits by index: the first round(n * train_fraction)
/// samples train, the rest evaluate.
template <typename T>
PreparedData<T> prepare_data(const Dataset& data, const RunConfig& cfg);

template <typename T>
struct ForwardResult {
  querybank::HiddenStates<T> hidden;
  querybank::QueryBank<T> bank;
  std::vector<Var<T>> responses;                           // per anchor, [N]
  std::vector<grounding::SimilarityTrace<T>> similarity;  // per anchor
  std::optional<Var<T>> prior;                             // [C, H, W] when the prior is on
  Var<T> conditioned;                                      // decoder input features
  Var<T> queries;                                          // [rows, d]
  maskdecoder::DecodeResult<T> decoded;
  Var<T> logits;                                           // [h, w]
  std::optional<objectives::LossTerms<T>> loss;
};

/// Reasoner, positional table, prior head, fusion and decoder parameters.
/// Every component is created regardless of ablation toggles so one seed
/// yields the same initial weights across ablations.
template <typename T>
class Model {
 public:
  Model(const RunConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ForwardResult<T> forward(Tape<T>& tape, const PreparedSample<T>& sample, bool with_loss) const;
  /// Binary prediction at h x w: logits > 0.
  Mask predict(const PreparedSample<T>& sample) const;

  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  const RunConfig& config() const { return cfg_; }
  const querybank::ReasonerParams<T>& reasoner() const { return reasoner_; }
  const grounding::ConvHeadParams<T>& prior_head() const { return head_; }
  const maskdecoder::DecoderParams<T>& decoder() const { return decoder_; }

 private:
  RunConfig cfg_;
  ParameterStore<T> store_;
  querybank::ReasonerParams<T> reasoner_;
  querybank::PositionalTable<T> positional_;
  grounding::ConvHeadParams<T> head_;
  grounding::FusionParams<T> fusion_;
  maskdecoder::DecoderParams<T> decoder_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace anchorseg::evalbench
