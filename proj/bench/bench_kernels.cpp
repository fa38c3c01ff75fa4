// Serial reference vs OpenMP variants of the hot loops.
#include <benchmark/benchmark.h>

#include <random>

#include "inteval/agreement.hpp"
#include "inteval/kernels.hpp"

using inteval::ExecutionPolicy;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

ExecutionPolicy policy_of(const benchmark::State& state) {
  return state.range(1) ? ExecutionPolicy::kParallel : ExecutionPolicy::kSerial;
}

void BM_WindowSums(benchmark::State& state) {
  const auto scores = random_vector(static_cast<std::size_t>(state.range(0)), 1, -1, 1);
  const std::size_t width = std::max<std::size_t>(5, scores.size() / 40);
  for (auto _ : state)
    benchmark::DoNotOptimize(inteval::kernels::window_sums(scores, width, policy_of(state)));
}

void BM_GaussianMix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto omega = random_vector(n, 2, -2, 2);
  const auto sigma = random_vector(n, 3, 0.5, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(inteval::kernels::gaussian_mix(omega, sigma, policy_of(state)));
}

void BM_GaussianMixBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto omega = random_vector(n, 4, -2, 2);
  const auto sigma = random_vector(n, 5, 0.5, 4);
  const auto grad = random_vector(n, 6, -1, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(inteval::kernels::gaussian_mix_backward(omega, sigma, grad, policy_of(state)));
}

void BM_Bootstrap(benchmark::State& state) {
  inteval::agreement::JudgmentVector a{"a", "support", "zero", {}, {}}, b = a;
  std::mt19937_64 rng(7);
  for (int i = 0; i < state.range(0); ++i) {
    a.keys.push_back(std::to_string(i));
    b.keys.push_back(std::to_string(i));
    a.labels.push_back(static_cast<int>(rng() & 1));
    b.labels.push_back(static_cast<int>(rng() & 1));
  }
  for (auto _ : state) {
    auto r = inteval::agreement::cohen_kappa(a, b);
    inteval::agreement::bootstrap_ci(a, b, 10000, 11, r, policy_of(state));
    benchmark::DoNotOptimize(r);
  }
}

}  // namespace

BENCHMARK(BM_WindowSums)->ArgsProduct({{4096, 65536}, {0, 1}})->ArgNames({"n", "parallel"});
BENCHMARK(BM_GaussianMix)->ArgsProduct({{512, 2048}, {0, 1}})->ArgNames({"n", "parallel"});
BENCHMARK(BM_GaussianMixBackward)->ArgsProduct({{512, 2048}, {0, 1}})->ArgNames({"n", "parallel"});
BENCHMARK(BM_Bootstrap)->ArgsProduct({{50}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
