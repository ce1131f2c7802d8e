#include <benchmark/benchmark.h>

#include <random>

#include "thermograph/archgraph.hpp"
#include "thermograph/gnn.hpp"
#include "thermograph/metrics.hpp"
#include "thermograph/oloc.hpp"
#include "thermograph/pipeline.hpp"
#include "thermograph/thermalsim.hpp"

using namespace thermograph;

static void BM_EnumerateSingleSplit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_single_split(n));
}
BENCHMARK(BM_EnumerateSingleSplit)->Arg(4)->Arg(6);

static void BM_EnumerateMultiSplit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_multi_split(n));
}
BENCHMARK(BM_EnumerateMultiSplit)->Arg(4)->Arg(6);

static void BM_Simulate(benchmark::State& state) {
  const auto arch = parse_architecture("S;5;{[0,1],[2],[3,4]}");
  const Scenario s{0, {12, 10, 8, 6, 5}};
  const auto u = baseline_uniform(arch, OlocConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(simulate(arch, s, u, PlantParams{}));
}
BENCHMARK(BM_Simulate);

static void BM_OptimizeEndurance(benchmark::State& state) {
  const auto arch = parse_architecture("M;4;{[0{[1,2],[3]}]}");
  const Scenario s{0, {14, 6, 9, 11}};
  for (auto _ : state) benchmark::DoNotOptimize(optimize_endurance(arch, s, PlantParams{}, OlocConfig{}));
}
BENCHMARK(BM_OptimizeEndurance)->Unit(benchmark::kMillisecond);

static std::vector<Sample> batch_samples(int count) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(4, 16);
  const auto archs = enumerate_single_split(4);
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    const auto& a = archs[static_cast<std::size_t>(i) % archs.size()];
    out.push_back({to_tensor(node_features(a, Scenario{i, {d(rng), d(rng), d(rng), d(rng)}})), 500.0});
  }
  return out;
}

static void BM_GatPredict(benchmark::State& state) {
  const auto model = glorot_init(1);
  const auto samples = batch_samples(1);
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, samples[0].graph));
}
BENCHMARK(BM_GatPredict);

static void BM_GatBatchGradient(benchmark::State& state) {
  const auto model = glorot_init(1);
  const auto samples = batch_samples(100);
  std::vector<const Sample*> batch;
  for (const auto& s : samples) batch.push_back(&s);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradients(model, batch));
}
BENCHMARK(BM_GatBatchGradient)->Unit(benchmark::kMillisecond);

static void BM_KendallTau(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d;
  std::vector<double> x(static_cast<std::size_t>(state.range(0))), y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = d(rng);
    y[i] = x[i] + d(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(kendall_tau(x, y));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KendallTau)->RangeMultiplier(10)->Range(1000, 1000000)->Complexity(benchmark::oNLogN);
BENCHMARK_MAIN();
