#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "inteval/kernels.hpp"
#include "inteval/model.hpp"

namespace inteval::attribution {

enum class Method {
  kRandom,
  kAttention,
  kScaledAttention,
  kIntegratedGradients,
  kInputXGrad,
  kDeepLift,
  kLime,
};

inline constexpr std::array<Method, 7> kAllMethods = {
    Method::kRandom,     Method::kAttention, Method::kScaledAttention,
    Method::kIntegratedGradients, Method::kInputXGrad, Method::kDeepLift,
    Method::kLime};

std::string_view to_string(Method m);
// Accepts the enum spelling ("INTEGRATED_GRADIENTS") and short names
// ("ig", "xgrad", "deeplift", "lime", "random", "attention", "scaled_attention").
Method method_from_string(std::string_view s);

struct AttributionConfig {
  std::uint64_t seed = 17;
  int ig_steps = 20;
  int lime_samples = 500;
  double lime_kernel_width = 0.25;
  double lime_ridge = 1.0;
  // 0 keeps the dense ridge fit; K > 0 refits on the K largest |coefficients|
  // and zeroes the rest.
  int lime_top_k = 0;
  // Explained class; the model's prediction when unset.
  std::optional<ClassId> target;
  ExecutionPolicy policy = ExecutionPolicy::kParallel;
};

struct TokenScores {
  std::string case_id;
  Method method = Method::kRandom;
  std::vector<double> scores;
  ClassId target = kViolationClass;
};

// Throws CapabilityError when the backend lacks what the method needs and
// NumericalError on non-finite output.
TokenScores attribute(const model::Classifier& model, const model::ChunkedInput& input,
                      Method method, const AttributionConfig& cfg);

// Per-token integrated gradients of the target logit from the zero embedding,
// right Riemann sum with `steps` points. Exposed for completeness checks.
std::vector<double> integrated_gradients(const model::Classifier& model,
                                         const model::ChunkedInput& input,
                                         ClassId target, int steps,
                                         ExecutionPolicy policy);

}  // namespace inteval::attribution
