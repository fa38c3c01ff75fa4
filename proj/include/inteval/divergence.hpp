#pragma once

#include <span>

#include "inteval/types.hpp"

namespace inteval {

// Kullback-Leibler divergence in bits; terms with p_i = 0 contribute 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// Jensen-Shannon divergence in bits, in [0, 1]. Throws ContractViolation when
// either argument is not a probability distribution (tolerance 1e-6).
double jsd(std::span<const double> p, std::span<const double> q);
inline double jsd(const Probs& p, const Probs& q) {
  return jsd(std::span<const double>(p), std::span<const double>(q));
}

}  // namespace inteval
