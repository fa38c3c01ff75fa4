#include "inteval/kernels.hpp"

#include <cmath>

#include "inteval/error.hpp"

namespace inteval {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(const char* data, std::size_t size) {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

namespace kernels {

std::vector<double> window_sums(std::span<const double> scores, std::size_t width,
                                ExecutionPolicy policy) {
  INTEVAL_EXPECT(width >= 1, "window width must be >= 1");
  if (width > scores.size()) return {};
  const std::size_t count = scores.size() - width + 1;
  std::vector<double> out(count);
  // Each window is summed independently (no running sum) so the serial and
  // parallel paths add in the same order.
  for_each_index(count, policy, [&](std::size_t w) {
    double s = 0.0;
    for (std::size_t k = 0; k < width; ++k) s += scores[w + k];
    out[w] = s;
  });
  return out;
}

std::vector<double> gaussian_mix(std::span<const double> omega,
                                 std::span<const double> sigma,
                                 ExecutionPolicy policy) {
  INTEVAL_EXPECT(omega.size() == sigma.size(), "omega/sigma length mismatch");
  const std::size_t n = omega.size();
  std::vector<double> z(n);
  for_each_index(n, policy, [&](std::size_t i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      acc += omega[j] * std::exp(-(d * d) / (2.0 * sigma[j] * sigma[j]));
    }
    z[i] = acc;
  });
  return z;
}

std::pair<std::vector<double>, std::vector<double>> gaussian_mix_backward(
    std::span<const double> omega, std::span<const double> sigma,
    std::span<const double> grad_z, ExecutionPolicy policy) {
  INTEVAL_EXPECT(omega.size() == sigma.size() && grad_z.size() == omega.size(),
                 "gaussian_mix_backward length mismatch");
  const std::size_t n = omega.size();
  std::vector<double> d_omega(n), d_sigma(n);
  for_each_index(n, policy, [&](std::size_t j) {
    const double s2 = sigma[j] * sigma[j];
    double go = 0.0, gs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double k = std::exp(-(d * d) / (2.0 * s2));
      go += grad_z[i] * k;
      gs += grad_z[i] * k * (d * d) / (s2 * sigma[j]);
    }
    d_omega[j] = go;
    d_sigma[j] = omega[j] * gs;
  });
  return {std::move(d_omega), std::move(d_sigma)};
}

}  // namespace kernels
}  // namespace inteval
