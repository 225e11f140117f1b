#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stpgn/kernels.hpp"

namespace k = stpgn::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Shapes of the first GCN projection at training width: (frames * joints) x in -> out.
template <void (*Gemm)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t)>
void BM_gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto kk = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_buffer(m * kk, 1), b = random_buffer(kk * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    Gemm(a.data(), b.data(), c.data(), m, kk, n);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * m * kk * n * state.iterations(), benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}

template <void (*Mix)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, std::size_t)>
void BM_node_mix(benchmark::State& state) {
  const std::size_t nodes = 13, frames = 80;
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto mix = random_buffer(nodes * nodes, 3), x = random_buffer(frames * nodes * channels, 4);
  std::vector<double> out(frames * nodes * channels);
  for (auto _ : state) {
    Mix(mix.data(), x.data(), out.data(), nodes, nodes, frames, channels);
    benchmark::DoNotOptimize(out.data());
    benchmark::ClobberMemory();
  }
}

void gemm_args(benchmark::internal::Benchmark* b) {
  b->Args({1040, 3, 64})->Args({1040, 64, 128})->Args({480, 128, 256})->Args({80, 3328, 1024});
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm>)->Name("gemm/serial")->Apply(gemm_args);
BENCHMARK(BM_gemm<k::parallel::gemm>)->Name("gemm/parallel")->Apply(gemm_args)->UseRealTime();
BENCHMARK(BM_gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Apply(gemm_args);
BENCHMARK(BM_gemm<k::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Apply(gemm_args)->UseRealTime();
BENCHMARK(BM_node_mix<k::serial::node_mix>)->Name("node_mix/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_node_mix<k::parallel::node_mix>)->Name("node_mix/parallel")->Arg(64)->Arg(256)->UseRealTime();

BENCHMARK_MAIN();
