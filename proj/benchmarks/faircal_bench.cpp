#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "faircal/calibrators.hpp"
#include "faircal/harness.hpp"
#include "faircal/kmeans.hpp"
#include "faircal/metrics.hpp"
#include "faircal/synth.hpp"

namespace {

using namespace faircal;

struct Scores {
  std::vector<double> s;
  std::vector<int> y;
};

Scores random_scores(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scores out{std::vector<double>(n), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.s[i] = u(rng);
    out.y[i] = u(rng) < out.s[i] * out.s[i];
  }
  return out;
}

void BM_FitBeta(benchmark::State& state) {
  auto d = random_scores(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_beta(d.s, d.y));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FitBeta)->RangeMultiplier(10)->Range(100, 100000)->Complexity();

void BM_FitIsotonic(benchmark::State& state) {
  auto d = random_scores(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_isotonic(d.s, d.y));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FitIsotonic)->RangeMultiplier(10)->Range(100, 100000)->Complexity();

void BM_FitBinning(benchmark::State& state) {
  auto d = random_scores(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_binning(d.s, d.y, 10));
}
BENCHMARK(BM_FitBinning)->RangeMultiplier(10)->Range(100, 100000);

void BM_Auroc(benchmark::State& state) {
  auto d = random_scores(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(auroc(d.s, d.y));
}
BENCHMARK(BM_Auroc)->RangeMultiplier(10)->Range(100, 100000);

void BM_KsError(benchmark::State& state) {
  auto d = random_scores(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ks_error(d.s, d.y));
}
BENCHMARK(BM_KsError)->RangeMultiplier(10)->Range(100, 100000);

void BM_KMeans(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> points(2000, std::vector<double>(64));
  for (auto& p : points) {
    for (double& x : p) x = normal(rng);
  }
  KMeansOptions options;
  options.k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_kmeans(points, options));
}
BENCHMARK(BM_KMeans)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_CrossValidation(benchmark::State& state) {
  SynthSpec spec;
  spec.subgroups = {{"a", 100, 8, 0.0875, 0.08}, {"b", 100, 8, 0.175, 0.30}};
  spec.genuine_pairs_per_id = 20;
  spec.imposter_pairs_per_id = 40;
  Dataset ds = generate(spec);
  RunConfig config;
  config.methods = {MethodKind::kBaseline, MethodKind::kFairCal};
  config.clusters = 50;
  config.target_fprs = {0.01};
  config.attribute_names = {"ethnicity"};
  config.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_cross_validation(ds, config));
}
BENCHMARK(BM_CrossValidation)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
