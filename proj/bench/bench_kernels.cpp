// Serial reference vs OpenMP kernels on encoder-sized problems.
// Attention uses a per-group scope mask so the parallel path can skip blocked keys.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tfz/numerics/kernels.hpp"

namespace k = tfz::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (double& x : v) x = dist(gen);
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::GemmDims dims{.batch = 8, .m = n, .n = n, .p = n, .stride_a = n * n, .stride_b = n * n};
  const auto a = random_buffer(dims.batch * n * n, 1), b = random_buffer(dims.batch * n * n, 2);
  std::vector<double> c(dims.batch * n * n);
  for (auto _ : state) {
    Gemm(dims, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * dims.batch * n * n * n));
}

// range(0): tokens, range(1): tokens per scope group.
template <auto Attention>
void BM_Attention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto group = static_cast<std::size_t>(state.range(1));
  const k::AttentionDims dims{.batch = 4, .tq = t, .tk = t, .d = 8, .dv = 8, .mask_stride = 0, .scale = 0.35};
  const auto q = random_buffer(dims.batch * t * 8, 3), kk = random_buffer(dims.batch * t * 8, 4),
             v = random_buffer(dims.batch * t * 8, 5);
  std::vector<double> mask(t * t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) mask[i * t + j] = i / group == j / group ? 0.0 : k::kMaskSentinel;
  }
  std::vector<double> out(dims.batch * t * 8), probs(dims.batch * t * t);
  for (auto _ : state) {
    Attention(dims, q.data(), kk.data(), v.data(), mask.data(), out.data(), probs.data());
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<k::serial::gemm>)->Name("gemm/serial")->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(BM_Gemm<k::parallel::gemm>)->Name("gemm/parallel")->Arg(32)->Arg(64)->Arg(128)->UseRealTime();
BENCHMARK(BM_Attention<k::serial::attention_forward>)
    ->Name("attention/serial")
    ->Args({256, 16})
    ->Args({256, 64})
    ->Args({256, 256});
BENCHMARK(BM_Attention<k::parallel::attention_forward>)
    ->Name("attention/parallel")
    ->Args({256, 16})
    ->Args({256, 64})
    ->Args({256, 256})
    ->UseRealTime();

BENCHMARK_MAIN();
