#include <benchmark/benchmark.h>

#include "vartex/autodiff.hpp"
#include "vartex/config.hpp"
#include "vartex/grid.hpp"
#include "vartex/model.hpp"
#include "vartex/rng.hpp"
#include "vartex/training.hpp"

using namespace vartex;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Self-attention over n tokens of width 64 with 4 heads, forward only.
void BM_Attention(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({1, n, 64}, 1);
  for (auto _ : state) {
    nn::Graph g(false);
    const nn::Var v = g.input(x);
    benchmark::DoNotOptimize(nn::attention(v, v, v, 4).value().data());
  }
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Attention)->RangeMultiplier(2)->Range(8, 512)->Complexity(benchmark::oNSquared);

// Eval forecast of the desk-tiny model on a crop of 32/S x 64/S cells.
void BM_ForwardCrop(benchmark::State& state) {
  const std::size_t split = static_cast<std::size_t>(state.range(0));
  const ModelConfig c = preset("desk-tiny").model;
  Model m(c, 1);
  const Region r = canonical_crops(c.image_height, c.image_width, split, c.patch).front();
  const Tensor x = random_tensor({c.variables, r.height, r.width}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(x, r).data());
}
BENCHMARK(BM_ForwardCrop)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

// One optimizer step of desk-tiny on a batch of 8 regional crops.
void BM_TrainStep(benchmark::State& state) {
  const std::size_t split = static_cast<std::size_t>(state.range(0));
  RunConfig rc = preset("desk-tiny");
  rc.plan.split = split;
  SynthConfig sc;
  sc.variables = rc.model.variables;
  sc.height = rc.model.image_height;
  sc.width = rc.model.image_width;
  sc.steps = 16;
  const GridSeries series = prepare_series(generate_synthetic(sc));
  Model m(rc.model, 1);
  OptimState opt = OptimState::for_store(m.params());
  const auto crops = canonical_crops(sc.height, sc.width, split, rc.model.patch);
  std::vector<Example> examples;
  for (std::size_t i = 0; i < rc.plan.batch_size; ++i) examples.push_back({i, crops[i % crops.size()]});
  const Batch batch = assemble_batch(series, examples, 1, rc.model, latitude_weights(series.latitudes));
  std::uint64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(m, opt, rc.plan, batch, 1e-4, ++step));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_AttentionCost(benchmark::State& state) {
  const ModelConfig c = preset("paper-r2").model;
  for (auto _ : state) benchmark::DoNotOptimize(attention_cost(c, 8).entries_total);
}
BENCHMARK(BM_AttentionCost);

}  // namespace

BENCHMARK_MAIN();
