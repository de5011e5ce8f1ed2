#include "hal/clustering.hpp"
#include "hal/metrics.hpp"
#include "hal/random.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

void BM_VMeasure(benchmark::State& state) {
  auto rng = hal::make_rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<int> t(n), p(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = static_cast<int>(hal::uniform_index(rng, 3));
    p[i] = static_cast<int>(hal::uniform_index(rng, 10));
  }
  for (auto _ : state) benchmark::DoNotOptimize(hal::metrics::v_measure(t, p));
}
BENCHMARK(BM_VMeasure)->Arg(1000)->Arg(100000);

hal::cluster::Points blobs(int n) {
  auto rng = hal::make_rng(5);
  hal::cluster::Points pts(n, 4);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) pts(i, j) = 3.0 * (i % 5) + hal::standard_normal(rng);
  }
  return pts;
}

void BM_KMeansRestarts(benchmark::State& state) {
  const auto pts = blobs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(hal::cluster::kmeanspp_restarts(pts, 5, 1, 10));
}
BENCHMARK(BM_KMeansRestarts)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Hierarchical(benchmark::State& state) {
  const auto pts = blobs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(hal::cluster::hierarchical_cluster(pts, 5));
}
BENCHMARK(BM_Hierarchical)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_Dbscan(benchmark::State& state) {
  const auto pts = blobs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(hal::cluster::dbscan(pts, 0.5, 5));
}
BENCHMARK(BM_Dbscan)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
