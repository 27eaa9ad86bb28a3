#include <benchmark/benchmark.h>

#include <random>

#include "anchorseg/imaging.hpp"
#include "anchorseg/ops.hpp"
#include "anchorseg/tape.hpp"

using namespace anchorseg;

namespace {

Tensor<float> noise(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

}  // namespace

static void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise({n, n}, 1), b = noise({n, n}, 2);
  for (auto _ : state) {
    Tape<float> tape;
    benchmark::DoNotOptimize(ops::matmul(tape.constant(a), tape.constant(b)).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(2 * n * n * n));
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(256);

static void BM_matmul_backward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise({n, n}, 1), b = noise({n, n}, 2);
  for (auto _ : state) {
    Tape<float> tape;
    auto x = tape.leaf(a), y = tape.leaf(b);
    tape.backward(ops::sum(ops::matmul(x, y)));
    benchmark::DoNotOptimize(x.grad().data().data());
  }
}
BENCHMARK(BM_matmul_backward)->Arg(64)->Arg(256);

// The prior head's stride-2 stages on the full-size canvas.
static void BM_conv2d_stride2(benchmark::State& state) {
  const auto cin = static_cast<std::size_t>(state.range(0)), extent = static_cast<std::size_t>(state.range(1));
  const auto x = noise({cin, extent, extent}, 3), k = noise({cin * 4, cin, 3, 3}, 4), b = noise({cin * 4}, 5);
  for (auto _ : state) {
    Tape<float> tape;
    benchmark::DoNotOptimize(
        ops::conv2d(tape.constant(x), tape.constant(k), tape.constant(b), 2).value().data().data());
  }
}
BENCHMARK(BM_conv2d_stride2)->Args({1, 256})->Args({4, 128});

static void BM_bilinear(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0)), out = static_cast<std::size_t>(state.range(1));
  const bool antialias = state.range(2) != 0;
  const auto m = noise({in, in}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(imaging::bilinear_resize(m, out, out, antialias).data().data());
}
BENCHMARK(BM_bilinear)->Args({24, 336, 0})->Args({336, 96, 1})->Args({480, 256, 1});

static void BM_gaussian_smooth(benchmark::State& state) {
  const auto extent = static_cast<std::size_t>(state.range(0));
  const auto m = noise({extent, extent}, 7);
  const imaging::GaussianSpec spec;
  for (auto _ : state) benchmark::DoNotOptimize(imaging::gaussian_smooth(m, spec).data().data());
}
BENCHMARK(BM_gaussian_smooth)->Arg(96)->Arg(480);
