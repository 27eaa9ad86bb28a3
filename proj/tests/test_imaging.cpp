#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "anchorseg/imaging.hpp"
#include "interp_oracle.hpp"
#include "support.hpp"

using namespace anchorseg;
using namespace anchorseg::imaging;
using testsupport::max_abs_diff;
using testsupport::random_tensor;

namespace {

Tensor<double> row(std::initializer_list<double> v) { return Tensor<double>(Shape{1, v.size()}, std::vector<double>(v)); }

}  // namespace

TEST_SUITE("bilinear") {
  TEST_CASE("same extents is the identity, with and without antialias") {
    std::mt19937_64 rng(1);
    auto m = random_tensor({5, 7}, rng);
    CHECK(bilinear_resize(m, 5, 7, false) == m);
    CHECK(bilinear_resize(m, 5, 7, true) == m);
  }

  TEST_CASE("row [0,1] to width 4 follows the half-pixel rule with edge clamp") {
    auto out = bilinear_resize(row({0.0, 1.0}), 1, 4, false);
    const std::vector<double> want{0.0, 0.25, 0.75, 1.0};
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(want[i]).epsilon(1e-15));
  }

  TEST_CASE("matches the reference fixtures within 1e-5") {
    const auto records = interp_oracle::load();
    REQUIRE(records.size() >= 50);
    double worst = 0.0;
    for (const auto& r : records) {
      Tensor<double> m({r.in_h, r.in_w});
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = r.input[i];
      const Tensor<double> got = r.nearest() ? nearest_resize(m, r.out_h, r.out_w)
                                             : bilinear_resize(m, r.out_h, r.out_w, r.antialias());
      REQUIRE(got.size() == r.expected.size());
      for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - double(r.expected[i])));
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("weights form a partition of unity over 1000 random extents") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> extent(1, 64);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t in = extent(rng), out = extent(rng);
      const bool aa = trial % 2 == 0;
      const auto w = bilinear_axis_weights(in, out, aa);
      REQUIRE(w.out == out);
      for (std::size_t o = 0; o < out; ++o) {
        double total = 0.0;
        for (std::size_t t = 0; t < w.count[o]; ++t) {
          CHECK(w.first[o] + t < in);
          CHECK(w.weight[w.offset[o] + t] >= 0.0);
          total += w.weight[w.offset[o] + t];
        }
        REQUIRE(total == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("constant maps stay constant over 1000 random resizes") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<std::size_t> extent(1, 40);
    std::uniform_real_distribution<double> value(-5.0, 5.0);
    for (int trial = 0; trial < 1000; ++trial) {
      const double c = value(rng);
      Tensor<double> m({extent(rng), extent(rng)}, c);
      const auto out = bilinear_resize(m, extent(rng), extent(rng), trial % 3 != 0);
      for (auto v : out.data()) REQUIRE(v == doctest::Approx(c).epsilon(1e-12));
    }
  }

  TEST_CASE("upscale followed by the exact inverse downscale keeps a constant") {
    Tensor<double> m({3, 4}, 2.5);
    const auto back = bilinear_resize(bilinear_resize(m, 12, 16, false), 3, 4, true);
    for (auto v : back.data()) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
  }

  TEST_CASE("acts on the trailing axes of a channel stack") {
    std::mt19937_64 rng(3);
    auto stack = random_tensor({2, 4, 5}, rng);
    const auto out = bilinear_resize(stack, 7, 3, true);
    REQUIRE(out.shape() == Shape{2, 7, 3});
    for (std::size_t c = 0; c < 2; ++c) {
      Tensor<double> plane({4, 5});
      for (std::size_t i = 0; i < 20; ++i) plane[i] = stack[c * 20 + i];
      const auto one = bilinear_resize(plane, 7, 3, true);
      for (std::size_t i = 0; i < 21; ++i) CHECK(out[c * 21 + i] == one[i]);
    }
  }

  TEST_CASE("zero target extent is a configuration error") {
    CHECK_THROWS_AS(bilinear_resize(row({1.0, 2.0}), 0, 2, false), ConfigError);
    CHECK_THROWS_AS(bilinear_resize(row({1.0, 2.0}), 1, 0, true), ConfigError);
  }

  TEST_CASE("gradient matches central differences") {
    std::mt19937_64 rng(5);
    for (bool aa : {false, true}) {
      for (auto [oh, ow] : {std::pair{9, 4}, std::pair{2, 3}, std::pair{6, 6}}) {
        auto f = [&, oh = oh, ow = ow](Tape<double>&, const std::vector<Var<double>>& x) {
          return bilinear_resize(x[0], std::size_t(oh), std::size_t(ow), aa);
        };
        CHECK(testsupport::fd_max_rel_error({random_tensor({5, 6}, rng)}, f, 17) < 1e-4);
      }
    }
  }
}

TEST_SUITE("nearest") {
  TEST_CASE("row [0,1,2,3] to width 2 keeps indices 0 and 2") {
    const auto out = nearest_resize(row({0, 1, 2, 3}), 1, 2);
    CHECK(out == row({0, 2}));
  }

  TEST_CASE("identity and constant maps") {
    std::mt19937_64 rng(2);
    auto m = random_tensor({3, 5}, rng);
    CHECK(nearest_resize(m, 3, 5) == m);
    Tensor<double> c({4, 4}, 7.0);
    CHECK(nearest_resize(c, 9, 2) == Tensor<double>({9, 2}, 7.0));
  }

  TEST_CASE("source index is floor(o * in / out), clamped") {
    for (std::size_t in = 1; in <= 20; ++in)
      for (std::size_t out = 1; out <= 20; ++out)
        for (std::size_t o = 0; o < out; ++o) {
          const std::size_t want = std::min((o * in) / out, in - 1);
          REQUIRE(nearest_source_index(o, in, out) == want);
        }
  }
}

TEST_SUITE("crop and pad") {
  TEST_CASE("top-left crop picks the leading block") {
    const auto m = Tensor<double>::matrix({{1, 2, 9}, {3, 4, 9}, {9, 9, 9}});
    CHECK(crop_top_left(m, 2, 2) == Tensor<double>::matrix({{1, 2}, {3, 4}}));
    CHECK(crop_top_left(m, 3, 3) == m);
    CHECK(crop_top_left(m, 1, 1) == Tensor<double>::matrix({{1}}));
    CHECK_THROWS_AS(crop_top_left(m, 4, 1), ContractError);
  }

  TEST_CASE("bottom-right pad appends exact zeros") {
    CHECK(pad_bottom_right_zero(Tensor<double>::matrix({{1}}), 2, 2) == Tensor<double>::matrix({{1, 0}, {0, 0}}));
    std::mt19937_64 rng(4);
    auto m = random_tensor({3, 2}, rng);
    CHECK(pad_bottom_right_zero(m, 3, 2) == m);
    CHECK(crop_top_left(pad_bottom_right_zero(m, 7, 5), 3, 2) == m);
    CHECK_THROWS_AS(pad_bottom_right_zero(m, 2, 2), ContractError);
  }

  TEST_CASE("crop gradient scatters back and zeroes the rest") {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>::matrix({{1, 2, 3}, {4, 5, 6}}));
    tape.backward(ops::sum(crop_top_left(x, 1, 2)));
    CHECK(x.grad() == Tensor<double>::matrix({{1, 1, 0}, {0, 0, 0}}));
  }

  TEST_CASE("pad gradient drops the padded region") {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>::matrix({{1, 2}}));
    auto w = tape.constant(Tensor<double>::matrix({{3, 5, 7}, {11, 13, 17}}));
    tape.backward(ops::sum(ops::mul(pad_bottom_right_zero(x, 2, 3), w)));
    CHECK(x.grad() == Tensor<double>::matrix({{3, 5}}));
  }
}

TEST_SUITE("long side") {
  TEST_CASE("480x640 at 336 scales to 252x336") {
    const auto e = long_side_extent(480, 640, 336);
    CHECK(e.h == 252);
    CHECK(e.w == 336);
  }

  TEST_CASE("padding region is exactly zero and content sits top-left") {
    std::mt19937_64 rng(8);
    auto m = random_tensor({30, 40}, rng, 0.5, 1.0);
    const auto r = resize_long_side_pad(m, 24);
    REQUIRE(r.map.shape() == Shape{24, 24});
    CHECK(r.content.h == 18);
    CHECK(r.content.w == 24);
    for (std::size_t y = 0; y < 24; ++y)
      for (std::size_t x = 0; x < 24; ++x) {
        if (y >= r.content.h || x >= r.content.w) {
          REQUIRE(r.map.at(y, x) == 0.0);
        } else {
          REQUIRE(r.map.at(y, x) > 0.0);
        }
      }
    CHECK(crop_top_left(r.map, 18, 24) == bilinear_resize(m, 18, 24, true));
  }

  TEST_CASE("square input of extent L is returned unchanged") {
    std::mt19937_64 rng(9);
    auto m = random_tensor({16, 16}, rng);
    const auto r = resize_long_side_pad(m, 16);
    CHECK(r.map == m);
    CHECK(r.content.h == 16);
  }
}

TEST_SUITE("gaussian") {
  // Independent closed form: g(x) = exp(-x^2 / (2 s^2)) / sum.
  std::vector<double> taps(double sigma, std::size_t k) {
    std::vector<double> g(k);
    const double half = double(k - 1) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double x = double(i) - half;
      g[i] = std::exp(-x * x / (2.0 * sigma * sigma));
      total += g[i];
    }
    for (auto& v : g) v /= total;
    return g;
  }

  TEST_CASE("kernel taps match the closed form and sum to one") {
    const GaussianSpec spec{7.0, 31};
    const auto k = gaussian_kernel_1d(spec);
    const auto want = taps(7.0, 31);
    REQUIRE(k.size() == 31);
    double total2d = 0.0;
    for (std::size_t i = 0; i < 31; ++i) {
      CHECK(k[i] == doctest::Approx(want[i]).epsilon(1e-14));
      for (std::size_t j = 0; j < 31; ++j) total2d += k[i] * k[j];
    }
    CHECK(std::abs(total2d - 1.0) < 1e-12);
  }

  TEST_CASE("impulse at the center of a large map reproduces K(i,j)") {
    Tensor<double> m({41, 41});
    m.at(20, 20) = 1.0;
    const auto out = gaussian_smooth(m, GaussianSpec{7.0, 31});
    const auto g = taps(7.0, 31);
    for (std::size_t i = 0; i < 41; ++i)
      for (std::size_t j = 0; j < 41; ++j) {
        const long di = long(i) - 20, dj = long(j) - 20;
        const double want = (std::abs(di) <= 15 && std::abs(dj) <= 15) ? g[di + 15] * g[dj + 15] : 0.0;
        REQUIRE(out.at(i, j) == doctest::Approx(want).epsilon(1e-12).scale(1e-15));
      }
  }

  TEST_CASE("constant map is preserved, including adapted kernels") {
    for (std::size_t n : {1u, 2u, 5u, 8u, 40u}) {
      Tensor<double> m({n, n + 3}, 0.7);
      const auto out = gaussian_smooth(m, GaussianSpec{7.0, 31});
      for (auto v : out.data()) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
    }
  }

  TEST_CASE("adaptive sizing caps the kernel at the grid and scales sigma") {
    auto a = adapted_gaussian(GaussianSpec{7.0, 31}, 8, 8);
    CHECK(a.ksize == 7);
    CHECK(a.sigma == doctest::Approx(7.0 * 7.0 / 31.0));
    a = adapted_gaussian(GaussianSpec{7.0, 31}, 96, 12);
    CHECK(a.ksize == 11);
    a = adapted_gaussian(GaussianSpec{7.0, 31}, 96, 96);
    CHECK(a.ksize == 31);
    CHECK(a.sigma == 7.0);
  }

  TEST_CASE("smoothing is linear and stays within the input range") {
    std::mt19937_64 rng(21);
    auto x = random_tensor({12, 9}, rng);
    auto y = random_tensor({12, 9}, rng);
    Tensor<double> mix({12, 9});
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.0 * x[i] - 3.0 * y[i];
    const GaussianSpec spec{2.0, 7};
    const auto sx = gaussian_smooth(x, spec), sy = gaussian_smooth(y, spec), sm = gaussian_smooth(mix, spec);
    for (std::size_t i = 0; i < mix.size(); ++i) CHECK(sm[i] == doctest::Approx(2.0 * sx[i] - 3.0 * sy[i]).epsilon(1e-12));
    const auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
    for (auto v : sx.data()) {
      CHECK(v >= *lo - 1e-12);
      CHECK(v <= *hi + 1e-12);
    }
  }

  TEST_CASE("reflect boundary mirrors without repeating the edge") {
    // Corner impulse on 3x3 with ksize 3: index -1 reflects to 1, which is 0,
    // so the corner keeps only the center tap along each axis.
    const auto g = taps(1.0, 3);
    Tensor<double> m({3, 3});
    m.at(0, 0) = 1.0;
    const auto out = gaussian_smooth(m, GaussianSpec{1.0, 3});
    CHECK(out.at(0, 0) == doctest::Approx(g[1] * g[1]).epsilon(1e-14));
    CHECK(out.at(0, 1) == doctest::Approx(g[1] * g[0]).epsilon(1e-14));
    CHECK(out.at(1, 1) == doctest::Approx(g[0] * g[0]).epsilon(1e-14));
    CHECK(out.at(2, 2) == 0.0);
  }
}

TEST_SUITE("minmax") {
  TEST_CASE("worked examples") {
    auto a = minmax_normalize(Tensor<double>::vector({2, 4, 6}));
    CHECK(a[0] == 0.0);
    CHECK(a[1] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(a[2] == doctest::Approx(1.0).epsilon(1e-8));
    auto b = minmax_normalize(Tensor<double>::vector({5, 5, 5}));
    CHECK(b == Tensor<double>::vector({0, 0, 0}));
    auto c = minmax_normalize(Tensor<double>::vector({-1, 0, 3}));
    CHECK(c[1] == doctest::Approx(0.25).epsilon(1e-8));
    CHECK(c[2] == doctest::Approx(1.0).epsilon(1e-8));
  }

  TEST_CASE("output stays in [0,1] and keeps the argmax") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      auto v = random_tensor({17}, rng, -100.0, 100.0);
      const auto n = minmax_normalize(v);
      for (auto x : n.data()) REQUIRE((x >= 0.0 && x <= 1.0));
      const auto am = std::max_element(v.data().begin(), v.data().end()) - v.data().begin();
      const auto an = std::max_element(n.data().begin(), n.data().end()) - n.data().begin();
      REQUIRE(am == an);
    }
  }

  TEST_CASE("gradient matches central differences") {
    std::mt19937_64 rng(33);
    auto f = [](Tape<double>&, const std::vector<Var<double>>& x) { return minmax_normalize(x[0]); };
    CHECK(testsupport::fd_max_rel_error({random_tensor({9}, rng)}, f, 3) < 1e-4);
  }
}
