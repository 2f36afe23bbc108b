// Serial reference vs OpenMP kernels. Set OMP_NUM_THREADS to vary the pool.

#include <benchmark/benchmark.h>

#include "mire/kernels.hpp"
#include "mire/rng.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  mire::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <auto Kernel>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <auto Kernel>
void BM_gram(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const std::size_t e = 32;
  const auto a = random_values(m * e, 3);
  std::vector<double> g(m * m);
  for (auto _ : state) {
    Kernel(a, g, m, e);
    benchmark::DoNotOptimize(g.data());
  }
}

template <auto Kernel>
void BM_nearest(benchmark::State& state) {
  const auto q = static_cast<std::size_t>(state.range(0));
  const std::size_t c = 100, e = 32;
  const auto queries = random_values(q * e, 4), means = random_values(c * e, 5);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(queries, means, q, c, e));
}

namespace k = mire::kernels;

BENCHMARK(BM_matmul<k::serial::matmul>)->Name("matmul/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_matmul<k::parallel::matmul>)->Name("matmul/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_gram<k::serial::gram>)->Name("gram/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_gram<k::parallel::gram>)->Name("gram/parallel")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_nearest<k::serial::nearest_rows>)->Name("nearest_rows/serial")->RangeMultiplier(4)->Range(256, 16384);
BENCHMARK(BM_nearest<k::parallel::nearest_rows>)->Name("nearest_rows/parallel")->RangeMultiplier(4)->Range(256, 16384);

}  // namespace

BENCHMARK_MAIN();
