#include "hal/mlp.hpp"
#include "hal/random.hpp"
#include "hal/spline_flow.hpp"

#include <benchmark/benchmark.h>

namespace {

using hal::nn::Matrix;

void BM_MlpForwardBackward(benchmark::State& state) {
  auto rng = hal::make_rng(1);
  const int width = static_cast<int>(state.range(0));
  hal::nn::Mlp mlp(hal::nn::MlpSpec{{4, width, width, 3}, hal::nn::Activation::SiLU, {}, {}}, rng);
  const Matrix x = Matrix::Random(128, 4);
  for (auto _ : state) {
    hal::nn::Tape tape;
    tape.backward(hal::nn::sum(mlp.forward(tape, tape.constant(x))));
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_MlpEval(benchmark::State& state) {
  auto rng = hal::make_rng(1);
  hal::nn::Mlp mlp(hal::nn::MlpSpec{{4, 64, 64, 3}, hal::nn::Activation::ReLU, {}, {}}, rng);
  const Matrix x = Matrix::Random(128, 4);
  for (auto _ : state) benchmark::DoNotOptimize(mlp.eval(x));
}
BENCHMARK(BM_MlpEval)->Unit(benchmark::kMicrosecond);

void BM_FlowLogDensity(benchmark::State& state) {
  auto rng = hal::make_rng(2);
  hal::flow::SplineFlow f(hal::flow::SplineFlowConfig{}, 1, rng);
  const int n = static_cast<int>(state.range(0));
  Eigen::VectorXd taus(n);
  for (int i = 0; i < n; ++i) taus(i) = hal::standard_exponential(rng);
  const Matrix cond = Matrix::Ones(n, 1);
  for (auto _ : state) {
    hal::nn::Tape tape;
    tape.backward(hal::nn::sum(f.log_density(tape, taus, cond)));
  }
}
BENCHMARK(BM_FlowLogDensity)->Arg(128)->Arg(1024)->Unit(benchmark::kMicrosecond);

void BM_FlowSample(benchmark::State& state) {
  auto rng = hal::make_rng(3);
  hal::flow::SplineFlow f(hal::flow::SplineFlowConfig{}, 1, rng);
  const Eigen::RowVectorXd one = Eigen::RowVectorXd::Ones(1);
  for (auto _ : state) benchmark::DoNotOptimize(f.sample(one, rng));
}
BENCHMARK(BM_FlowSample);

}  // namespace
