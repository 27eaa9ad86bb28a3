#include <benchmark/benchmark.h>

#include <random>

#include "anchorseg/evalbench/config.hpp"
#include "anchorseg/evalbench/model.hpp"
#include "anchorseg/evalbench/scene.hpp"
#include "anchorseg/grounding.hpp"

using namespace anchorseg;
using namespace anchorseg::evalbench;

namespace {

// Toy profile defaults match configs/toy.ini.
struct ToyFixture {
  RunConfig cfg;
  PreparedSample<float> sample;
  ToyFixture() {
    cfg.data.n_samples = 8;
    sample = prepare_sample<float>(generate_scene(cfg, 1, 0), 0, cfg);
  }
};

const ToyFixture& toy() {
  static const ToyFixture fixture;
  return fixture;
}

}  // namespace

static void BM_toy_forward(benchmark::State& state) {
  Model<float> model(toy().cfg, 1);
  for (auto _ : state) {
    Tape<float> tape;
    benchmark::DoNotOptimize(model.forward(tape, toy().sample, false).logits.value().data().data());
  }
}
BENCHMARK(BM_toy_forward)->Unit(benchmark::kMillisecond);

static void BM_toy_forward_backward(benchmark::State& state) {
  Model<float> model(toy().cfg, 1);
  for (auto _ : state) {
    Tape<float> tape;
    auto r = model.forward(tape, toy().sample, true);
    tape.backward(r.loss->total);
    model.store().zero_grad();
  }
}
BENCHMARK(BM_toy_forward_backward)->Unit(benchmark::kMillisecond);

// Spatial prior on the full-size profile, 480x640 input.
static void BM_full_size_prior(benchmark::State& state) {
  grounding::PriorGeometry g;
  g.h = 480;
  g.w = 640;
  ParameterStore<float> store;
  std::mt19937_64 rng(2);
  auto head = grounding::ConvHeadParams<float>::create(store, g.channels, g.strides, rng);
  Tensor<float> raw({576});
  std::normal_distribution<float> normal;
  for (auto& v : raw.data()) v = normal(rng);
  for (auto _ : state) {
    Tape<float> tape;
    benchmark::DoNotOptimize(grounding::build_spatial_prior(tape.constant(raw), g, head).prior.value().data().data());
  }
}
BENCHMARK(BM_full_size_prior)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
