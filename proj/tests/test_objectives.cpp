#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "anchorseg/gradcheck.hpp"
#include "anchorseg/objectives.hpp"
#include "support.hpp"

using namespace anchorseg;
using namespace anchorseg::objectives;
using testsupport::random_tensor;

namespace {

constexpr double kLn2 = std::numbers::ln2;

double eval(Var<double> v) { return v.value()[0]; }

double bce(const Tensor<double>& p, const Tensor<double>& t) {
  Tape<double> tape;
  return eval(bce_loss(tape.constant(p), tape.constant(t)));
}

double dice(const Tensor<double>& p, const Tensor<double>& t) {
  Tape<double> tape;
  return eval(dice_loss(tape.constant(p), tape.constant(t)));
}

// Half-pixel bilinear weight of source index s for output o (upsampling).
double tent(std::size_t o, std::size_t s, std::size_t in, std::size_t out) {
  double src = (double(o) + 0.5) * double(in) / double(out) - 0.5;
  src = std::clamp(src, 0.0, double(in - 1));
  return std::max(0.0, 1.0 - std::abs(src - double(s)));
}

Tensor<double> binary_mask(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::bernoulli_distribution on(0.4);
  Tensor<double> m({h, w});
  for (auto& v : m.data()) v = on(rng) ? 1.0 : 0.0;
  return m;
}

}  // namespace

TEST_SUITE("mask losses") {
  TEST_CASE("binary cross-entropy closed forms") {
    CHECK(bce(Tensor<double>({1}, 0.5), Tensor<double>({1}, 1.0)) == doctest::Approx(kLn2).epsilon(1e-12));
    CHECK(bce(Tensor<double>({3, 3}, 0.5), Tensor<double>({3, 3}, 0.5)) == doctest::Approx(kLn2).epsilon(1e-12));
    const auto t = Tensor<double>::vector({0, 1, 1, 0});
    CHECK(bce(t, t) < 1e-6);
    // Clamped: p = 0 against t = 1 costs -ln(1e-7), not infinity.
    CHECK(bce(Tensor<double>({1}), Tensor<double>({1}, 1.0)) == doctest::Approx(-std::log(kProbClamp)).epsilon(1e-9));
  }

  TEST_CASE("dice closed forms") {
    const Tensor<double> ones({4}, 1.0), zeros({4});
    CHECK(dice(ones, ones) == doctest::Approx(0.0));
    CHECK(dice(zeros, zeros) == doctest::Approx(0.0));
    CHECK(dice(zeros, ones) == doctest::Approx(0.8));
    CHECK_THROWS_AS(dice(ones, Tensor<double>({5})), ContractError);
  }

  TEST_CASE("mask loss applies sigmoid then the weighted pair") {
    Tape<double> tape;
    LossWeights w;
    // Zero logits: p = 0.5 everywhere, t = ones(4) -> bce ln2, dice 1 - 5/7.
    auto l = loss_mask(tape.constant(Tensor<double>({2, 2})), tape.constant(Tensor<double>({2, 2}, 1.0)), w);
    CHECK(eval(l) == doctest::Approx(2.0 * kLn2 + 4.0 * (1.0 - 5.0 / 7.0)).epsilon(1e-12));
  }
}

TEST_SUITE("targets") {
  TEST_CASE("softening constants and a single pixel") {
    const imaging::GaussianSpec spec{1.0, 3};
    CHECK(soften_mask(Tensor<double>({6, 6}, 1.0), spec) == Tensor<double>({6, 6}, 1.0));
    CHECK(soften_mask(Tensor<double>({6, 6}), spec) == Tensor<double>({6, 6}));
    Tensor<double> m({5, 5});
    m.at(2, 2) = 1.0;
    const auto s = soften_mask(m, spec);
    const double e = std::exp(-0.5), g0 = 1.0 / (1.0 + 2.0 * e), g1 = e / (1.0 + 2.0 * e);
    const double g[3] = {g1, g0, g1};
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 5; ++x) {
        const bool inside = y >= 1 && y <= 3 && x >= 1 && x <= 3;
        const double want = inside ? g[y - 1] * g[x - 1] : 0.0;
        CHECK(s.at(y, x) == doctest::Approx(want).epsilon(1e-12));
      }
  }

  TEST_CASE("token map of constant responses is zero") {
    Tape<double> tape;
    auto s = token_map_upsampled(tape.constant(Tensor<double>({16}, 0.7)), 10, 12, 12);
    CHECK(s.shape() == Shape{10, 12});
    CHECK(s.value() == Tensor<double>({10, 12}));
  }

  TEST_CASE("one-hot 2x2 responses upsample by the half-pixel tent") {
    Tape<double> tape;
    const auto s = token_map_upsampled(tape.constant(Tensor<double>::vector({5, -1, -1, -1})), 8, 8, 8).value();
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        // The minmax eps guard scales the peak by 6 / (6 + 1e-8).
        CHECK(s.at(y, x) == doctest::Approx(tent(y, 0, 2, 8) * tent(x, 0, 2, 8)).epsilon(1e-8));
        CHECK(s.at(y, x) >= 0.0);
        CHECK(s.at(y, x) <= 1.0);
      }
    CHECK(s.at(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
  }

  TEST_CASE("token map stays in the unit interval") {
    std::mt19937_64 rng(9);
    Tape<double> tape;
    for (int trial = 0; trial < 20; ++trial) {
      const auto s = token_map_upsampled(tape.constant(random_tensor({36}, rng, -10, 10)), 17, 23, 24).value();
      for (double v : s.data()) REQUIRE((v >= 0.0 && v <= 1.0));
    }
  }

  TEST_CASE("downsampled targets") {
    const imaging::GaussianSpec spec;
    const auto ones = downsample_target(Tensor<double>({16, 16}, 1.0), 4, 16, spec);
    CHECK(ones.shape() == Shape{16});
    for (double v : ones.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(downsample_target(Tensor<double>({16, 16}), 4, 16, spec) == Tensor<double>({16}));

    Tensor<double> left({8, 8});
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 4; ++x) left.at(y, x) = 1.0;
    const auto t = downsample_target(left, 4, 8, imaging::GaussianSpec{1e-3, 1});
    for (std::size_t i = 0; i < 16; ++i) CHECK(t[i] == (i % 4 < 2 ? 1.0 : 0.0));
  }

  TEST_CASE("padding keeps the lower token rows empty") {
    // 8x16 all-ones: content occupies the top half of the 16 canvas.
    const auto t = downsample_target(Tensor<double>({8, 16}, 1.0), 4, 16, imaging::GaussianSpec{1e-3, 1});
    for (std::size_t i = 0; i < 16; ++i) CHECK(t[i] == (i < 8 ? 1.0 : 0.0));
  }
}

TEST_SUITE("cycle") {
  TEST_CASE("text-to-mask examples") {
    Tape<double> tape;
    LossWeights w;
    // S = 0.5 against t = ones(4): bce ln2, dice 1 - (4 + 1) / (2 + 4 + 1) = 2/7.
    auto half = tape.constant(Tensor<double>({2, 2}, 0.5));
    auto ones = tape.constant(Tensor<double>({2, 2}, 1.0));
    CHECK(eval(loss_t2m(half, ones, w)) == doctest::Approx(2.0 * kLn2 + 4.0 * 2.0 / 7.0).epsilon(1e-12));
    // bce ln2 and dice 0.8 in one operand pair: p = 0.5 vs t = 1 for bce, then the table value.
    CHECK(2.0 * bce(Tensor<double>({1}, 0.5), Tensor<double>({1}, 1.0)) +
              4.0 * dice(Tensor<double>({4}), Tensor<double>({4}, 1.0)) ==
          doctest::Approx(4.586294).epsilon(1e-6));
    auto bin = tape.constant(Tensor<double>::matrix({{0, 1}, {1, 0}}));
    CHECK(eval(loss_t2m(bin, bin, w)) < 1e-5);
    CHECK(eval(loss_t2m(half, ones, LossWeights{.bce = 0, .dice = 0})) == 0.0);
    CHECK_THROWS_AS(loss_t2m(half, tape.constant(Tensor<double>({4})), w), ContractError);
  }

  TEST_CASE("mask-to-text vanishes on agreement") {
    Tape<double> tape;
    LossWeights w;
    auto t = tape.constant(Tensor<double>::vector({0, 1, 1, 0}));
    CHECK(eval(loss_m2t(t, t, w)) < 1e-5);
    auto z = tape.constant(Tensor<double>({4}));
    CHECK(eval(loss_m2t(z, z, w)) < 1e-5);
    CHECK_THROWS_AS(loss_m2t(z, tape.constant(Tensor<double>({5})), w), ContractError);
  }

  TEST_CASE("mask-to-text has a local minimum at a binary target") {
    std::mt19937_64 rng(10);
    const auto target = downsample_target(binary_mask(16, 16, rng), 4, 16, imaging::GaussianSpec{1e-3, 1});
    LossWeights w;
    auto loss_at = [&](const Tensor<double>& s) {
      Tape<double> tape;
      return eval(loss_m2t(tape.constant(s), tape.constant(target), w));
    };
    const double base = loss_at(target);
    for (std::size_t i = 0; i < target.size(); ++i)
      for (double delta : {-1e-3, 1e-3}) {
        auto s = target;
        s[i] = std::clamp(s[i] + delta, 0.0, 1.0);
        CHECK(loss_at(s) >= base);
      }
  }

  TEST_CASE("cycle loss is the plain sum of its halves") {
    std::mt19937_64 rng(11);
    Tape<double> tape;
    LossWeights w;
    auto s_up = tape.constant(random_tensor({6, 6}, rng, 0, 1));
    auto m = tape.constant(random_tensor({6, 6}, rng, 0, 1));
    auto s_n = tape.constant(random_tensor({9}, rng, 0, 1));
    auto m_d = tape.constant(random_tensor({9}, rng, 0, 1));
    const double sum = eval(loss_t2m(s_up, m, w)) + eval(loss_m2t(s_n, m_d, w));
    CHECK(eval(loss_tmcc(s_up, m, s_n, m_d, w)) == doctest::Approx(sum).epsilon(1e-14));
  }

  TEST_CASE("targets never receive gradient") {
    std::mt19937_64 rng(12);
    Tape<double> tape;
    LossWeights w;
    auto s_up = tape.leaf(random_tensor({5, 5}, rng, 0.1, 0.9));
    auto m = tape.leaf(random_tensor({5, 5}, rng, 0, 1));
    auto s_n = tape.leaf(random_tensor({4}, rng, 0.1, 0.9));
    auto m_d = tape.leaf(random_tensor({4}, rng, 0, 1));
    auto logits = tape.leaf(random_tensor({5, 5}, rng));
    CycleOperands<double> cycle{s_up, m, s_n, m_d};
    tape.backward(loss_total(logits, m, &cycle, w).total);
    CHECK(m.grad() == Tensor<double>({5, 5}));
    CHECK(m_d.grad() == Tensor<double>({4}));
    CHECK(testsupport::max_abs_diff(s_up.grad(), Tensor<double>({5, 5})) > 0.0);
    CHECK(testsupport::max_abs_diff(logits.grad(), Tensor<double>({5, 5})) > 0.0);
  }

  TEST_CASE("gradient w.r.t. the anchor through the responses matches central differences") {
    std::mt19937_64 rng(13);
    ParameterStore<double> store;
    const auto tokens = random_tensor({16, 5}, rng);
    auto& q = store.add("q", random_tensor({1, 5}, rng));
    const auto mask = binary_mask(10, 12, rng);
    LossWeights w;
    const auto m_sigma = soften_mask(mask, imaging::GaussianSpec{});
    const auto m_down = downsample_target(mask, 4, 12, imaging::GaussianSpec{});
    auto loss = [&](Tape<double>& tape) {
      auto raw = ops::reshape(grounding::spatial_responses(tape.constant(tokens), tape.param(q)), {16});
      auto s_up = token_map_upsampled(raw, 10, 12, 12);
      auto s_n = imaging::minmax_normalize(raw);
      return loss_tmcc(s_up, tape.constant(m_sigma), s_n, tape.constant(m_down), w);
    };
    const auto r = grad_check(loss, {&q});
    INFO("worst " << r.worst_param << "[" << r.worst_index << "] = " << r.max_rel_error);
    CHECK(r.passed(1e-4));
  }
}

TEST_SUITE("total") {
  struct Operands {
    Tape<double> tape;
    Var<double> logits, mask;
    CycleOperands<double> cycle;
    explicit Operands(std::uint64_t seed) {
      std::mt19937_64 rng(seed);
      logits = tape.constant(random_tensor({6, 6}, rng, -3, 3));
      mask = tape.constant(binary_mask(6, 6, rng));
      cycle = {tape.constant(random_tensor({6, 6}, rng, 0, 1)), tape.constant(random_tensor({6, 6}, rng, 0, 1)),
               tape.constant(random_tensor({9}, rng, 0, 1)), tape.constant(random_tensor({9}, rng, 0, 1))};
    }
    double total(const LossWeights& w, double txt = 0.0) { return eval(loss_total(logits, mask, &cycle, w, txt).total); }
  };

  TEST_CASE("zero cycle weight reduces to the mask objective") {
    Operands o(14);
    LossWeights w;
    w.tmcc = 0.0;
    const double mask_only = eval(loss_mask(o.logits, o.mask, w));
    CHECK(o.total(w) == doctest::Approx(mask_only).epsilon(1e-14));
    CHECK(eval(loss_total(o.logits, o.mask, static_cast<const CycleOperands<double>*>(nullptr), LossWeights{}).total) ==
          doctest::Approx(mask_only).epsilon(1e-14));
  }

  TEST_CASE("all-zero weights give zero") {
    Operands o(15);
    CHECK(o.total(LossWeights{0, 0, 0, 0, 0}, 3.0) == 0.0);
  }

  TEST_CASE("total is the weighted sum of its parts") {
    Operands o(16);
    LossWeights w{.bce = 2, .dice = 4, .mask = 0.7, .tmcc = 1.3, .txt = 0.5};
    const double want = 0.5 * 2.0 + 0.7 * eval(loss_mask(o.logits, o.mask, w)) +
                        1.3 * eval(loss_tmcc(o.cycle.s_up, o.cycle.m_sigma, o.cycle.s_normalized, o.cycle.m_sigma_down, w));
    CHECK(o.total(w, 2.0) == doctest::Approx(want).epsilon(1e-13));
    auto terms = loss_total(o.logits, o.mask, &o.cycle, w, 2.0);
    CHECK(terms.has_t2m);
    CHECK(terms.has_m2t);
  }

  TEST_CASE("total never decreases when any weight grows") {
    Operands o(17);
    const LossWeights base{.bce = 1, .dice = 1, .mask = 1, .tmcc = 1, .txt = 1};
    const double b = o.total(base, 0.4);
    for (int k = 0; k < 5; ++k) {
      LossWeights w = base;
      double* fields[] = {&w.bce, &w.dice, &w.mask, &w.tmcc, &w.txt};
      *fields[k] += 0.5;
      CHECK(o.total(w, 0.4) >= b);
    }
  }

  TEST_CASE("disabled halves drop out of the total") {
    Operands o(18);
    LossWeights w;
    o.cycle.use_m2t = false;
    auto terms = loss_total(o.logits, o.mask, &o.cycle, w);
    CHECK(terms.has_t2m);
    CHECK_FALSE(terms.has_m2t);
    const double want = eval(loss_mask(o.logits, o.mask, w)) + eval(loss_t2m(o.cycle.s_up, o.cycle.m_sigma, w));
    CHECK(eval(terms.total) == doctest::Approx(want).epsilon(1e-14));
  }
}
