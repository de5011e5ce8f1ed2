#include "hal/experiment.hpp"
#include "hal/hybrid_solver.hpp"
#include "hal/reference_systems.hpp"
#include "hal/segmentation.hpp"
#include "hal/solvers.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_FixedStep(benchmark::State& state) {
  const auto method = state.range(0) == 0 ? hal::Method::RK4 : hal::Method::DormandPrince;
  const hal::Flow decay = [](double, const hal::StateVec& x) -> hal::StateVec { return -x; };
  for (auto _ : state) {
    benchmark::DoNotOptimize(hal::integrate_fixed(decay, hal::StateVec::Ones(4), 0.0, 10.0, 0.01, method));
  }
}
BENCHMARK(BM_FixedStep)->Arg(0)->Arg(1);

void BM_SimulateDataset(benchmark::State& state) {
  const std::string system = state.range(0) == 0 ? "tcp-reno" : "sls";
  const auto solver = hal::experiment::default_solver(system);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hal::experiment::simulate_dataset(system, 4, 50.0, 1, solver));
  }
}
BENCHMARK(BM_SimulateDataset)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Segment(benchmark::State& state) {
  const auto data = hal::experiment::simulate_dataset("tcp-reno", 10, 100.0, 1,
                                                      hal::experiment::default_solver("tcp-reno"));
  for (auto _ : state) benchmark::DoNotOptimize(hal::segment_dataset(data, 0.0));
}
BENCHMARK(BM_Segment)->Unit(benchmark::kMicrosecond);

}  // namespace
