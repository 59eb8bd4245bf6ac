// Serial reference vs OpenMP kernels. Run with --benchmark_filter to pick one.

#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "shiftaudit/frechet.hpp"
#include "shiftaudit/kernels.hpp"
#include "shiftaudit/rng.hpp"
#include "shiftaudit/tsne.hpp"

using namespace shiftaudit;

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

Execution exec_of(const benchmark::State& state) {
  return state.range(1) == 0 ? Execution::serial : Execution::parallel;
}

void BM_SquaredDistances(benchmark::State& state) {
  const Eigen::MatrixXd x = normal_matrix(state.range(0), 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::squared_distances(x, exec_of(state)));
  state.SetComplexityN(state.range(0));
}

void BM_RbfGram(benchmark::State& state) {
  const Eigen::MatrixXd x = normal_matrix(state.range(0), 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::rbf_gram(x, 0.02, exec_of(state)));
}

void BM_KlGradient(benchmark::State& state) {
  const auto n = state.range(0);
  TsneConfig cfg;
  cfg.execution = exec_of(state);
  const Eigen::MatrixXd p = joint_affinities(normal_matrix(n, 16, 3), cfg).p;
  const Eigen::MatrixXd y = normal_matrix(n, 2, 4);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::student_t_kl_gradient(p, y, 1.0, exec_of(state)));
}

void BM_FrechetBootstrap(benchmark::State& state) {
  const Eigen::MatrixXd a = normal_matrix(state.range(0), 8, 5);
  const Eigen::MatrixXd b = normal_matrix(state.range(0), 8, 6);
  BootstrapOptions opts;
  opts.resamples = 200;
  opts.execution = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_frechet(a, b, opts));
}

// Second argument: 0 serial, 1 parallel.
BENCHMARK(BM_SquaredDistances)->ArgsProduct({{500, 2000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RbfGram)->ArgsProduct({{500, 2000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KlGradient)->ArgsProduct({{500, 2000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FrechetBootstrap)->ArgsProduct({{1000, 5000}, {0, 1}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
