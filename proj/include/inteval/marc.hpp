#pragma once

// Soft-mask rationale extraction. A per-token mask
//   lambda_i = sigmoid(sum_j omega_j * exp(-(i - j)^2 / (2 sigma_j^2)))
// is optimized so that the kept input preserves the prediction, its complement
// loses it, and the mask stays sparse and smooth.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "inteval/kernels.hpp"
#include "inteval/model.hpp"
#include "inteval/types.hpp"

namespace inteval::marc {

struct MaskParams {
  std::vector<double> omega;
  std::vector<double> sigma;
};

struct MarcConfig {
  double alpha_lambda = 1.0;
  double alpha_sigma = 1.2;
  double omega_init = 1.2;
  double sigma_init = 2.0;
  double noise_std = 0.3;
  double flip_fraction = 0.05;
  int steps = 300;
  double learning_rate = 0.1;
  double binarize_threshold = 0.5;
  double sigma_min = 0.1;
  // Explain this class instead of the model's own prediction (ablation only).
  std::optional<ClassId> gold_label;
  ExecutionPolicy policy = ExecutionPolicy::kParallel;

  void validate() const;
};

struct LossTerms {
  double sufficiency = 0.0;        // -p(y_hat | kept input)
  double comprehensiveness = 0.0;  // +p(y_hat | complement)
  double sparsity = 0.0;           // alpha_lambda * mean(lambda)
  double compactness = 0.0;        // alpha_sigma * sum (lambda_i - lambda_{i+1})^2
  double total() const { return sufficiency + comprehensiveness + sparsity + compactness; }
};

struct SoftMask {
  std::vector<double> lambda;
  MaskParams params;
  std::vector<LossTerms> trace;
};

MaskParams initial_params(std::size_t tokens, const MarcConfig& cfg);

// Throws ContractViolation on non-positive sigma or length mismatch.
SoftMask mask_from_params(const MaskParams& params,
                          ExecutionPolicy policy = ExecutionPolicy::kSerial);

// Loss terms for one noisy draw (noise and flips derived from `seed`).
// Throws NumericalError naming the first non-finite term.
LossTerms marc_loss(const model::Classifier& model, const model::ChunkedInput& input,
                    const SoftMask& mask, ClassId y_hat, const MarcConfig& cfg,
                    std::uint64_t seed);

// Adam on (omega, sigma) for cfg.steps; deterministic given seed.
SoftMask optimize_mask(const model::Classifier& model, const model::ChunkedInput& input,
                       const MarcConfig& cfg, std::uint64_t seed);

// Maximal runs with lambda >= threshold.
RationaleSet binarize(const SoftMask& mask, double threshold, const std::string& case_id);

}  // namespace inteval::marc
