#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "interformer/tensor.hpp"

using namespace interformer;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <auto Kernel>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = filled(m * k, 1), b = filled(k * n, 2);
  std::vector<double> out(m * n);
  for (auto _ : state) {
    Kernel(a.data(), b.data(), out.data(), m, k, n);
    benchmark::DoNotOptimize(out.data());
    benchmark::ClobberMemory();
  }
  state.counters["MAC/s"] = benchmark::Counter(double(m * k * n) * double(state.iterations()),
                                               benchmark::Counter::kIsRate);
}

// Shapes that show up in training: batch x hidden, token blocks, attention.
#define GEMM_ARGS                                                                           \
  Args({256, 64, 64})->Args({256, 256, 128})->Args({2048, 8, 8})->Args({256, 1024, 64})

BENCHMARK(BM_Gemm<gemm_accumulate>)->Name("gemm_nn")->GEMM_ARGS;
BENCHMARK(BM_Gemm<gemm_nt_accumulate>)->Name("gemm_nt")->GEMM_ARGS;
BENCHMARK(BM_Gemm<gemm_tn_accumulate>)->Name("gemm_tn")->GEMM_ARGS;

}  // namespace
