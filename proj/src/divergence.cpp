#include "inteval/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "inteval/error.hpp"

namespace inteval {

namespace {

void check_distribution(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    INTEVAL_EXPECT(std::isfinite(v) && v >= 0.0, "probability entry must be finite and >= 0");
    total += v;
  }
  INTEVAL_EXPECT(std::abs(total - 1.0) <= 1e-6, "probabilities must sum to 1");
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  INTEVAL_EXPECT(p.size() == q.size(), "distributions differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    d += p[i] * std::log2(p[i] / q[i]);
  }
  return d;
}

double jsd(std::span<const double> p, std::span<const double> q) {
  INTEVAL_EXPECT(p.size() == q.size(), "distributions differ in length");
  check_distribution(p);
  check_distribution(q);
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  const double d = 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
  return std::clamp(d, 0.0, 1.0);
}

}  // namespace inteval
