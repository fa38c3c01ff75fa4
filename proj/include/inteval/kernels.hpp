#pragma once

// Data-parallel inner loops. Every kernel takes an ExecutionPolicy: kSerial is
// the reference implementation the tests compare against, kParallel runs the
// same arithmetic under OpenMP and must produce identical results.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace inteval {

enum class ExecutionPolicy { kSerial, kParallel };

// Calls fn(i) for i in [0, n). Under kParallel iterations are distributed with
// a dynamic OpenMP schedule; fn must only write to per-index state.
template <class Fn>
void for_each_index(std::size_t n, ExecutionPolicy policy, Fn&& fn) {
  if (policy == ExecutionPolicy::kSerial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

// Deterministic 64-bit mixer used to derive independent per-item seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_string(const char* data, std::size_t size);

namespace kernels {

// Sum of every length-`width` window at stride 1. Empty when width exceeds
// the input.
std::vector<double> window_sums(std::span<const double> scores, std::size_t width,
                                ExecutionPolicy policy);

// z_i = sum_j omega_j * exp(-(i - j)^2 / (2 sigma_j^2)).
std::vector<double> gaussian_mix(std::span<const double> omega,
                                 std::span<const double> sigma,
                                 ExecutionPolicy policy);

// Vector-Jacobian product of gaussian_mix: given dL/dz, returns (dL/domega,
// dL/dsigma).
std::pair<std::vector<double>, std::vector<double>> gaussian_mix_backward(
    std::span<const double> omega, std::span<const double> sigma,
    std::span<const double> grad_z, ExecutionPolicy policy);

}  // namespace kernels
}  // namespace inteval
