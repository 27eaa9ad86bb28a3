#include "anchorseg/evalbench/model.hpp"

#include <random>

#include "anchorseg/evalbench/encoder.hpp"
#include "anchorseg/ops.hpp"

namespace anchorseg::evalbench {

void check_dataset_matches(const Dataset& data, const RunConfig& cfg) {
  const auto& m = cfg.model;
  if (data.h != m.h || data.w != m.w || data.c != m.c || data.grid != m.grid) {
    throw ConfigError("dataset extents " + std::to_string(data.h) + "x" + std::to_string(data.w) + "x" +
                      std::to_string(data.c) + " grid " + std::to_string(data.grid) + " do not match config " +
                      std::to_string(m.h) + "x" + std::to_string(m.w) + "x" + std::to_string(m.c) + " grid " +
                      std::to_string(m.grid));
  }
}

namespace {

template <typename T>
PreparedSample<T> prepare_with(const SceneSample& scene, std::size_t index, const RunConfig& cfg,
                               const SceneEncoder& tokens, const FeatureEncoder& features) {
  const auto& m = cfg.model;
  PreparedSample<T> p;
  p.index = index;
  p.tokens = tokens.encode<T>(scene.image);
  p.features = features.encode<T>(scene.image, m.h, m.w);
  Tensor<double> mask({m.h, m.w});
  for (std::size_t i = 0; i < scene.mask.size(); ++i) mask[i] = scene.mask[i];
  p.mask = mask.cast<T>();
  p.m_sigma = objectives::soften_mask(mask, cfg.gaussian).cast<T>();
  p.m_down = objectives::downsample_target(mask, m.grid, m.l_vl, cfg.gaussian).cast<T>();
  p.symbols = scene.symbols;
  p.is_null = scene.is_null;
  p.gt = scene.mask;
  return p;
}

}  // namespace

template <typename T>
PreparedSample<T> prepare_sample(const SceneSample& scene, std::size_t index, const RunConfig& cfg) {
  const auto& m = cfg.model;
  SceneEncoder tokens(m.h, m.w, m.c, m.grid, m.d_lm, m.encoder_seed);
  FeatureEncoder features(m.c, m.channels, m.feat_h, m.feat_w, m.l_sam, m.encoder_seed);
  return prepare_with<T>(scene, index, cfg, tokens, features);
}

template <typename T>
PreparedData<T> prepare_data(const Dataset& data, const RunConfig& cfg) {
  check_dataset_matches(data, cfg);
  const auto& m = cfg.model;
  SceneEncoder tokens(m.h, m.w, m.c, m.grid, m.d_lm, m.encoder_seed);
  FeatureEncoder features(m.c, m.channels, m.feat_h, m.feat_w, m.l_sam, m.encoder_seed);
  PreparedData<T> out;
  const std::size_t n_train = data.train_count(cfg.data.train_fraction);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    auto p = prepare_with<T>(data.samples[i], i, cfg, tokens, features);
    (i < n_train ? out.train : out.eval).push_back(std::move(p));
  }
  return out;
}

template <typename T>
Model<T>::Model(const RunConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const auto& m = cfg_.model;
  std::mt19937_64 rng(seed);
  querybank::ReasonerDims rd;
  rd.vocab = kVocabSize;
  rd.d_lm = m.d_lm;
  rd.d = m.d;
  rd.contextual = cfg_.contextual();
  rd.anchors = m.anchors;
  reasoner_ = querybank::ReasonerParams<T>::create(store_, rd, rng);
  positional_ = querybank::PositionalTable<T>::create(store_, rd.contextual + rd.anchors, m.d);
  head_ = grounding::ConvHeadParams<T>::create(store_, m.channels, cfg_.geometry().strides, rng);
  fusion_ = grounding::FusionParams<T>::create(store_, m.channels, m.anchors);
  maskdecoder::DecoderDims dd;
  dd.d = m.d;
  dd.channels = m.channels;
  dd.ffn_hidden = m.ffn_hidden;
  dd.blocks = m.decoder_blocks;
  decoder_ = maskdecoder::DecoderParams<T>::create(store_, dd, rng);
  // Pixel features are relu outputs with a shared positive mean, so a random
  // head starts most seeds at |logit| ~ 50 and training locks into a constant
  // mask. A zero head starts every pixel at p = 0.5; its own gradient does
  // not depend on its value, so learning still starts on the first step.
  decoder_.out_w->value.fill(T(0));
}

template <typename T>
ForwardResult<T> Model<T>::forward(Tape<T>& tape, const PreparedSample<T>& s, bool with_loss) const {
  const auto& m = cfg_.model;
  const auto& ab = cfg_.ablation;
  const auto geo = cfg_.geometry();
  ForwardResult<T> r;
  auto tokens = tape.constant(s.tokens);
  r.hidden = querybank::generate_query_bank(tokens, std::span<const std::uint16_t>(s.symbols), reasoner_);
  r.bank = querybank::project_bank(r.hidden, reasoner_);

  // Similarity lives in the language-model space: image tokens against the
  // anchor hidden state before the phi projection.
  const bool need_similarity = ab.use_prior || (with_loss && ab.use_tmcc);
  if (need_similarity) {
    for (const auto& anchor : r.hidden.anchors) {
      r.responses.push_back(grounding::spatial_responses(tokens, anchor));
      r.similarity.push_back(grounding::similarity_map(r.responses.back(), m.h, m.w, m.l_vl));
    }
  }

  r.conditioned = tape.constant(s.features);
  if (ab.use_prior) {
    std::vector<Var<T>> priors;
    for (const auto& sim : r.similarity) priors.push_back(grounding::build_spatial_prior(sim, geo, head_).prior);
    r.prior = priors.size() == 1 ? priors.front() : grounding::fuse_multi_anchor(priors, fusion_);
    r.conditioned = grounding::inject_prior(r.conditioned, *r.prior);
  }

  r.queries = querybank::add_positional(r.bank, tape.param(*positional_.table), ab.use_contextual);
  r.decoded = maskdecoder::decode_conditioned(r.conditioned, r.queries, decoder_);
  r.logits = maskdecoder::postprocess_logits(r.decoded.logits, m.h, m.w, m.l_sam);

  if (with_loss) {
    auto mask = tape.constant(s.mask);
    const bool cycle_on = ab.use_tmcc && !s.is_null && (ab.use_t2m || ab.use_m2t);
    std::vector<objectives::CycleOperands<T>> cycles;
    if (cycle_on) {
      auto m_sigma = tape.constant(s.m_sigma);
      auto m_down = tape.constant(s.m_down);
      for (const auto& sim : r.similarity) cycles.push_back({sim.map, m_sigma, sim.normalized, m_down, ab.use_t2m, ab.use_m2t});
    }
    auto terms = objectives::loss_total(r.logits, mask, cycle_on ? &cycles.front() : nullptr, cfg_.loss);
    // Additional anchors are each supervised toward the same target.
    for (std::size_t t = 1; t < cycles.size(); ++t) {
      const auto& c = cycles[t];
      if (c.use_t2m) terms.total = ops::add(terms.total, ops::scale(objectives::loss_t2m(c.s_up, c.m_sigma, cfg_.loss), static_cast<T>(cfg_.loss.tmcc)));
      if (c.use_m2t) terms.total = ops::add(terms.total, ops::scale(objectives::loss_m2t(c.s_normalized, c.m_sigma_down, cfg_.loss), static_cast<T>(cfg_.loss.tmcc)));
    }
    r.loss = terms;
  }
  return r;
}

template <typename T>
Mask Model<T>::predict(const PreparedSample<T>& sample) const {
  Tape<T> tape;
  const auto r = forward(tape, sample, false);
  const auto& v = r.logits.value();
  Mask out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > T(0) ? 1 : 0;
  return out;
}

template struct PreparedSample<float>;
template struct PreparedSample<double>;
template PreparedSample<float> prepare_sample(const SceneSample&, std::size_t, const RunConfig&);
template PreparedSample<double> prepare_sample(const SceneSample&, std::size_t, const RunConfig&);
template PreparedData<float> prepare_data(const Dataset&, const RunConfig&);
template PreparedData<double> prepare_data(const Dataset&, const RunConfig&);
template class Model<float>;
template class Model<double>;

}  // namespace anchorseg::evalbench
