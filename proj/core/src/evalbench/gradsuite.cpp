#include "anchorseg/evalbench/gradsuite.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <random>
#include <regex>

#include "anchorseg/evalbench/model.hpp"
#include "anchorseg/grounding.hpp"
#include "anchorseg/imaging.hpp"
#include "anchorseg/init.hpp"
#include "anchorseg/maskdecoder.hpp"
#include "anchorseg/objectives.hpp"
#include "anchorseg/ops.hpp"
#include "anchorseg/querybank.hpp"

namespace anchorseg::evalbench {
namespace {

using V = Var<double>;
using Tp = Tape<double>;

// Random values bounded away from zero so relu kinks sit far from the probe.
Tensor<double> away_from_zero(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

// Reduces any tensor to a scalar with fixed random weights, so no gradient
// entry is degenerate by symmetry.
V weighted_sum(V y, std::uint64_t salt) {
  std::mt19937_64 rng(salt);
  auto w = y.tape->constant(normal_tensor<double>(y.shape(), 1.0, rng));
  return ops::sum(ops::mul(y, w));
}

class Suite {
 public:
  Suite(std::string module, std::uint64_t seed) : module_(std::move(module)), rng_(seed) {}

  Parameter<double>* param(const std::string& name, Tensor<double> init) { return &store_.add(module_ + "." + name + std::to_string(store_.size()), std::move(init)); }
  Parameter<double>* normal(const std::string& name, Shape s, double std = 1.0) {
    return param(name, normal_tensor<double>(std::move(s), std, rng_));
  }
  Parameter<double>* nonzero(const std::string& name, Shape s) { return param(name, away_from_zero(std::move(s), rng_)); }

  void check(const std::string& name, std::vector<Parameter<double>*> params, std::function<V(Tp&)> f,
             bool negative = false) {
    const auto salt = rng_();
    LossBuilder loss = [f, salt](Tp& tape) { return weighted_sum(f(tape), salt); };
    cases_.push_back({module_, name, grad_check(loss, params), negative});
  }
  std::mt19937_64& rng() { return rng_; }
  ParameterStore<double>& store() { return store_; }
  std::vector<GradCase> take() { return std::move(cases_); }

 private:
  std::string module_;
  std::mt19937_64 rng_;
  ParameterStore<double> store_;
  std::vector<GradCase> cases_;
};

V P(Tp& t, Parameter<double>* p) { return t.param(*p); }

// Elementwise product whose backward rule has its sign flipped on purpose.
V corrupted_mul(V a, V b) {
  Tensor<double> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tp& tape, std::size_t self) {
    const auto& g = tape.grad(self);
    auto& ga = tape.grad_buffer(ia);
    auto& gb = tape.grad_buffer(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] -= g[i] * tape.value(ib)[i];
      gb[i] -= g[i] * tape.value(ia)[i];
    }
  });
}

std::vector<GradCase> tensor_engine(std::uint64_t seed) {
  Suite s("tensor-engine", seed);
  auto a = s.normal("a", {3, 4}), b = s.normal("b", {4, 2}), c = s.normal("c", {3, 4});
  s.check("matmul", {a, b}, [=](Tp& t) { return ops::matmul(P(t, a), P(t, b)); });
  s.check("transpose-add-sub", {a, c}, [=](Tp& t) {
    return ops::sub(ops::add(P(t, a), P(t, c)), ops::transpose(ops::transpose(P(t, c))));
  });
  s.check("mul", {a, c}, [=](Tp& t) { return ops::mul(P(t, a), P(t, c)); });
  s.check("scale-add_scalar", {a}, [=](Tp& t) { return ops::add_scalar(ops::scale(P(t, a), 1.7), -0.3); });
  s.check("sigmoid", {a}, [=](Tp& t) { return ops::sigmoid(P(t, a)); });
  auto r = s.nonzero("r", {3, 4});
  s.check("relu", {r}, [=](Tp& t) { return ops::relu(P(t, r)); });
  s.check("tanh", {a}, [=](Tp& t) { return ops::tanh(P(t, a)); });
  s.check("sum-mean", {a, c}, [=](Tp& t) {
    return ops::concat_cols(ops::reshape(ops::sum(P(t, a)), {1, 1}), ops::reshape(ops::mean(P(t, c)), {1, 1}));
  });
  auto bias = s.normal("bias", {4});
  s.check("add_rowwise", {a, bias}, [=](Tp& t) { return ops::add_rowwise(P(t, a), P(t, bias)); });
  s.check("mean_rows", {a}, [=](Tp& t) { return ops::mean_rows(P(t, a)); });
  s.check("softmax_rows", {a}, [=](Tp& t) { return ops::softmax_rows(P(t, a)); });
  s.check("reshape-slice-concat", {a, c}, [=](Tp& t) {
    auto top = ops::slice_rows(P(t, a), 0, 2);
    auto rest = ops::slice_rows(P(t, c), 1, 3);
    return ops::concat_rows(std::vector<V>{ops::reshape(top, {2, 4}), rest, top});
  });
  auto w = s.normal("w", {4, 5}), wb = s.normal("wb", {5});
  s.check("linear", {a, w, wb}, [=](Tp& t) { return ops::linear(P(t, a), P(t, w), P(t, wb)); });
  auto img = s.normal("img", {2, 5, 6}), img2 = s.normal("img2", {2, 5, 6});
  auto k = s.normal("k", {3, 2, 3, 3}), kb = s.normal("kb", {3});
  s.check("conv2d_same", {img, k, kb}, [=](Tp& t) { return ops::conv2d_same(P(t, img), P(t, k), P(t, kb)); });
  s.check("conv2d_stride2", {img, k, kb}, [=](Tp& t) { return ops::conv2d(P(t, img), P(t, k), P(t, kb), 2); });
  s.check("concat_channels", {img, img2}, [=](Tp& t) { return ops::concat_channels(std::vector<V>{P(t, img), P(t, img2)}); });
  s.check("negative-control", {a, c}, [=](Tp& t) { return corrupted_mul(P(t, a), P(t, c)); }, true);
  return s.take();
}

std::vector<GradCase> imaging_suite(std::uint64_t seed) {
  Suite s("imaging", seed);
  auto m = s.normal("m", {5, 7});
  s.check("bilinear-upscale", {m}, [=](Tp& t) { return imaging::bilinear_resize(P(t, m), 11, 13, false); });
  s.check("bilinear-downscale-antialias", {m}, [=](Tp& t) { return imaging::bilinear_resize(P(t, m), 2, 3, true); });
  s.check("bilinear-downscale-plain", {m}, [=](Tp& t) { return imaging::bilinear_resize(P(t, m), 3, 4, false); });
  auto chw = s.normal("chw", {2, 4, 6});
  s.check("bilinear-channels", {chw}, [=](Tp& t) { return imaging::bilinear_resize(P(t, chw), 7, 3, true); });
  s.check("crop_top_left", {m}, [=](Tp& t) { return imaging::crop_top_left(P(t, m), 3, 4); });
  s.check("pad_bottom_right_zero", {m}, [=](Tp& t) { return imaging::pad_bottom_right_zero(P(t, m), 6, 9); });
  s.check("resize_long_side_pad", {m}, [=](Tp& t) { return imaging::resize_long_side_pad(P(t, m), 4).map; });
  auto v = s.param("v", Tensor<double>({6}, std::vector<double>{0.3, -1.2, 2.5, 0.8, -0.4, 1.1}));
  s.check("minmax_normalize", {v}, [=](Tp& t) { return imaging::minmax_normalize(P(t, v)); });
  return s.take();
}

std::vector<GradCase> querybank_suite(std::uint64_t seed) {
  Suite s("querybank", seed);
  querybank::ReasonerDims dims{6, 5, 4, 3, 1};
  auto rp = querybank::ReasonerParams<double>::create(s.store(), dims, s.rng(), "reasoner");
  auto pos = querybank::PositionalTable<double>::create(s.store(), 4, 4, "positional");
  pos.table->value = normal_tensor<double>({4, 4}, 0.5, s.rng());
  auto tokens = s.normal("tokens", {9, 5});
  std::vector<Parameter<double>*> all = s.store().all();
  const std::vector<std::uint16_t> symbols{1, 4, 4};
  s.check("bank-with-positional", all, [=](Tp& t) {
    auto h = querybank::generate_query_bank(P(t, tokens), std::span<const std::uint16_t>(symbols), rp);
    return querybank::add_positional(querybank::project_bank(h, rp), P(t, pos.table));
  });
  s.check("anchor-only-rows", all, [=](Tp& t) {
    auto h = querybank::generate_query_bank(P(t, tokens), std::span<const std::uint16_t>(symbols), rp);
    return querybank::add_positional(querybank::project_bank(h, rp), P(t, pos.table), false);
  });
  return s.take();
}

std::vector<GradCase> grounding_suite(std::uint64_t seed) {
  Suite s("grounding", seed);
  auto tokens = s.normal("tokens", {16, 5}), anchor = s.normal("anchor", {1, 5});
  s.check("spatial_responses", {tokens, anchor}, [=](Tp& t) { return grounding::spatial_responses(P(t, tokens), P(t, anchor)); });
  s.check("similarity_map", {tokens, anchor}, [=](Tp& t) {
    return grounding::similarity_map(grounding::spatial_responses(P(t, tokens), P(t, anchor)), 6, 9, 12).map;
  });
  grounding::PriorGeometry geo;
  geo.h = 6;
  geo.w = 9;
  geo.l_vl = 12;
  geo.l_sam = 8;
  geo.channels = 3;
  geo.feat_h = geo.feat_w = 2;
  geo.strides = grounding::default_strides(8, 2);
  auto head = grounding::ConvHeadParams<double>::create(s.store(), 3, geo.strides, s.rng(), "head");
  for (auto* b : {head.b1, head.b2, head.b3}) b->value = normal_tensor<double>(b->value.shape(), 0.3, s.rng());
  std::vector<Parameter<double>*> prior_params{anchor, head.k1, head.b1, head.k2, head.b2, head.k3, head.b3};
  s.check("build_spatial_prior", prior_params, [=](Tp& t) {
    return grounding::build_spatial_prior(grounding::spatial_responses(P(t, tokens), P(t, anchor)), geo, head).prior;
  });
  auto f = s.normal("f", {3, 2, 2}), prior = s.normal("prior", {3, 2, 2});
  s.check("inject_prior", {f, prior}, [=](Tp& t) { return grounding::inject_prior(P(t, f), P(t, prior)); });
  auto fusion = grounding::FusionParams<double>::create(s.store(), 3, 2, "fusion");
  fusion.w->value = normal_tensor<double>(fusion.w->value.shape(), 0.5, s.rng());
  s.check("fuse_multi_anchor", {f, prior, fusion.w, fusion.b}, [=](Tp& t) {
    return grounding::fuse_multi_anchor(std::vector<V>{P(t, f), P(t, prior)}, fusion);
  });
  return s.take();
}

std::vector<GradCase> maskdecoder_suite(std::uint64_t seed) {
  Suite s("maskdecoder", seed);
  maskdecoder::DecoderDims dims{5, 4, 6, 2};
  auto dp = maskdecoder::DecoderParams<double>::create(s.store(), dims, s.rng(), "decoder");
  for (auto& blk : dp.blocks) blk.ffn_b1->value = away_from_zero({6}, s.rng());
  auto f = s.normal("f", {4, 3, 3}), q = s.normal("q", {3, 5});
  auto all = s.store().all();
  s.check("decode_conditioned", all, [=](Tp& t) { return maskdecoder::decode_conditioned(P(t, f), P(t, q), dp).logits; });
  auto lowres = s.normal("lowres", {3, 3});
  s.check("postprocess_logits", {lowres}, [=](Tp& t) { return maskdecoder::postprocess_logits(P(t, lowres), 5, 7, 9); });
  return s.take();
}

std::vector<GradCase> objectives_suite(std::uint64_t seed) {
  Suite s("objectives", seed);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  auto probs = [&](Shape sh) {
    Tensor<double> t(std::move(sh));
    for (auto& v : t.data()) v = unit(s.rng());
    return t;
  };
  auto p = s.param("p", probs({4, 5}));
  auto target = probs({4, 5});
  objectives::LossWeights w;
  s.check("bce_loss", {p}, [=](Tp& t) { return objectives::bce_loss(P(t, p), t.constant(target)); });
  s.check("dice_loss", {p}, [=](Tp& t) { return objectives::dice_loss(P(t, p), t.constant(target)); });
  s.check("loss_mask", {p}, [=](Tp& t) { return objectives::loss_mask(P(t, p), t.constant(target), w); });
  auto tokens = s.normal("tokens", {16, 5}), anchor = s.normal("anchor", {1, 5});
  Tensor<double> mask({6, 9});
  for (std::size_t y = 1; y < 4; ++y)
    for (std::size_t x = 2; x < 6; ++x) mask.at(y, x) = 1.0;
  imaging::GaussianSpec g{1.5, 3};
  const auto m_sigma = objectives::soften_mask(mask, g);
  const auto m_down = objectives::downsample_target(mask, 4, 12, g);
  s.check("loss_tmcc", {tokens, anchor}, [=](Tp& t) {
    auto raw = grounding::spatial_responses(P(t, tokens), P(t, anchor));
    auto sim = grounding::similarity_map(raw, 6, 9, 12);
    return objectives::loss_tmcc(sim.map, t.constant(m_sigma), sim.normalized, t.constant(m_down), w);
  });
  return s.take();
}

std::vector<GradCase> full_suite(std::uint64_t seed) {
  const auto cfg = grad_check_config();
  // First non-null scene so the cycle-consistency term is active.
  SceneSample scene;
  for (std::size_t i = 0;; ++i) {
    scene = generate_scene(cfg, seed, i);
    if (!scene.is_null) break;
  }
  auto sample = std::make_shared<PreparedSample<double>>(prepare_sample<double>(scene, 0, cfg));
  auto model = std::make_shared<Model<double>>(cfg, seed);
  // Zero biases put relu inputs of the zero-padded region exactly on the kink,
  // and the zero decoder head blocks every gradient upstream of it. Biases,
  // the positional table and the head are redrawn so the test point is generic.
  static const std::regex bias_name(R"((^|\.)(\w+_)?b\d*$|^positional$|^decoder\.out_w$)");
  std::mt19937_64 rng(seed + 1);
  for (auto* p : model->store().all()) {
    if (std::regex_search(p->name, bias_name)) p->value = normal_tensor<double>(p->value.shape(), 0.1, rng);
  }
  LossBuilder loss = [model, sample](Tp& t) { return model->forward(t, *sample, true).loss->total; };
  std::vector<GradCase> out;
  out.push_back({"full", "total-loss", grad_check(loss, model->store().all()), false});
  return out;
}

}  // namespace

std::vector<std::string> grad_modules() {
  return {"tensor-engine", "imaging", "querybank", "grounding", "maskdecoder", "objectives", "full"};
}

RunConfig grad_check_config() {
  RunConfig cfg;
  auto& m = cfg.model;
  m.h = 16;
  m.w = 16;
  m.grid = 4;
  m.d_lm = 8;
  m.d = 6;
  m.channels = 4;
  m.feat_h = m.feat_w = 4;
  m.l_vl = 16;
  m.l_sam = 16;
  m.n_bank = 3;
  m.ffn_hidden = 6;
  cfg.data.n_samples = 8;
  cfg.validate();
  return cfg;
}

std::vector<GradCase> run_grad_suite(const std::string& module, std::uint64_t seed) {
  using Runner = std::vector<GradCase> (*)(std::uint64_t);
  const std::vector<std::pair<std::string, Runner>> runners = {
      {"tensor-engine", tensor_engine}, {"imaging", imaging_suite},         {"querybank", querybank_suite},
      {"grounding", grounding_suite},   {"maskdecoder", maskdecoder_suite}, {"objectives", objectives_suite},
      {"full", full_suite}};
  std::vector<GradCase> out;
  bool matched = false;
  for (const auto& [name, run] : runners) {
    if (!module.empty() && module != name) continue;
    matched = true;
    auto cases = run(seed);
    out.insert(out.end(), cases.begin(), cases.end());
  }
  if (!matched) throw ConfigError("unknown grad-check module '" + module + "'");
  return out;
}

}  // namespace anchorseg::evalbench
