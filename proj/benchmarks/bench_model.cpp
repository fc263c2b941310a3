#include <benchmark/benchmark.h>

#include <random>

#include "tactile/model.hpp"
#include "tactile/pretrain.hpp"

using namespace tactile;

namespace {

TactileTensor noise(Shape4 shape) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> v(shape.size());
  for (auto& x : v) x = normal(rng);
  return TactileTensor(shape, std::move(v));
}

ModelConfig desk_model() {
  ModelConfig cfg;
  cfg.input_shape = {1, 20, 16, 16};
  cfg.tubelet = {5, 4};
  cfg.embedding.dim = 64;
  cfg.encoder = {3, 64, 4, 128, 0.1, 0};
  cfg.num_classes = 4;
  return cfg;
}

void BM_Tokenize(benchmark::State& state) {
  const auto x = noise({1, 45, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(tokenize(x, {5, 4}));
  state.SetItemsProcessed(state.iterations() * 576);
}
BENCHMARK(BM_Tokenize);

void BM_Predict(benchmark::State& state) {
  const StatModel model(desk_model(), 0);
  const auto seq = tokenize(noise(desk_model().input_shape), {5, 4});
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(seq));
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);

void BM_FinetuneStep(benchmark::State& state) {
  const StatModel model(desk_model(), 0);
  const std::vector<TubeletSequence> batch(16, tokenize(noise(desk_model().input_shape), {5, 4}));
  const std::vector<std::size_t> labels(16, 1);
  std::vector<SampleDraw> draws;
  for (std::uint64_t i = 0; i < 16; ++i) draws.push_back({0, 0, i, true});
  for (auto _ : state) benchmark::DoNotOptimize(finetune_step(model, batch, labels, draws).loss);
}
BENCHMARK(BM_FinetuneStep)->Unit(benchmark::kMillisecond);

void BM_PretrainStep(benchmark::State& state) {
  const StatModel model(desk_model(), 0);
  const std::vector<TubeletSequence> batch(16, tokenize(noise(desk_model().input_shape), {5, 4}));
  std::vector<SampleDraw> draws;
  for (std::uint64_t i = 0; i < 16; ++i) draws.push_back({0, 0, i, true});
  for (auto _ : state) benchmark::DoNotOptimize(pretrain_step(model, batch, draws, {}).loss);
}
BENCHMARK(BM_PretrainStep)->Unit(benchmark::kMillisecond);

void BM_PairSampling(benchmark::State& state) {
  const auto grid = TubeletGrid::make({1, 45, 32, 32}, {5, 4});
  Rng rng(3);
  const auto plan = plan_spatial_mask(grid, 0.5, rng);
  for (auto _ : state) benchmark::DoNotOptimize(sample_pairs(grid, plan, 30, rng));
}
BENCHMARK(BM_PairSampling);

}  // namespace
BENCHMARK_MAIN();
