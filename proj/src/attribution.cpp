#include "inteval/attribution.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "inteval/error.hpp"

namespace inteval::attribution {

using model::ChunkedInput;
using model::Classifier;
using model::ForwardOptions;
using model::GradMode;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kRandom: return "RANDOM";
    case Method::kAttention: return "ATTENTION";
    case Method::kScaledAttention: return "SCALED_ATTENTION";
    case Method::kIntegratedGradients: return "INTEGRATED_GRADIENTS";
    case Method::kInputXGrad: return "INPUT_X_GRAD";
    case Method::kDeepLift: return "DEEPLIFT";
    case Method::kLime: return "LIME";
  }
  return "?";
}

Method method_from_string(std::string_view s) {
  std::string key(s);
  for (char& c : key) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  static const std::map<std::string, Method> kAliases = {
      {"IG", Method::kIntegratedGradients}, {"XGRAD", Method::kInputXGrad},
      {"X_GRAD", Method::kInputXGrad},      {"ALPHA", Method::kAttention},
      {"ALPHA_GRAD", Method::kScaledAttention}};
  if (auto it = kAliases.find(key); it != kAliases.end()) return it->second;
  for (Method m : kAllMethods)
    if (to_string(m) == key) return m;
  throw ValidationError("unknown attribution method '" + std::string(s) + "'");
}

namespace {

std::vector<double> row_sums(const Eigen::MatrixXd& m) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m.row(i).sum();
  return out;
}

void require_gradients(const Classifier& model, Method m) {
  if (!model.supports_gradients())
    throw CapabilityError(fmt::format("{} needs gradients; backend '{}' has none", to_string(m),
                                      model.backend()));
}

void require_attention(const Classifier& model, Method m) {
  if (!model.supports_attention())
    throw CapabilityError(fmt::format("{} needs attention weights; backend '{}' has none",
                                      to_string(m), model.backend()));
}

ForwardOptions grad_options(ClassId target, GradMode mode) {
  ForwardOptions o;
  o.target = target;
  o.objective = model::Objective::kLogit;
  o.grad = mode;
  return o;
}

// Uniform score keyed by (seed, token id, occurrence index of that id), so a
// permutation of the tokens permutes the scores.
std::vector<double> random_scores(const ChunkedInput& input, std::uint64_t seed) {
  std::vector<double> out(input.token_count());
  std::map<int, std::uint64_t> seen;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int id = input.token_at(i);
    const std::uint64_t k = seen[id]++;
    const std::uint64_t h =
        splitmix64(splitmix64(seed ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(id))) ^ k);
    out[i] = static_cast<double>(h >> 11) * 0x1.0p-53;
  }
  return out;
}

std::vector<double> lime_scores(const Classifier& model, const ChunkedInput& input,
                                ClassId target, const AttributionConfig& cfg) {
  const std::size_t n = input.token_count();
  const auto samples = static_cast<std::size_t>(std::max(cfg.lime_samples, 2));
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> how_many(1, n);

  // Row 0 is the unperturbed document.
  Eigen::MatrixXd z = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(samples),
                                            static_cast<Eigen::Index>(n));
  std::vector<model::MaskSpec> masks(samples, model::MaskSpec::remove({}));
  std::vector<std::size_t> order(n);
  for (std::size_t s = 1; s < samples; ++s) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t drop = how_many(rng);
    std::vector<Span> removed;
    for (std::size_t k = 0; k < drop; ++k) {
      z(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(order[k])) = 0.0;
      removed.push_back({order[k], order[k] + 1});
    }
    std::sort(removed.begin(), removed.end());
    masks[s] = model::MaskSpec::remove(std::move(removed));
  }
  const auto outputs = model::predict_batch(model, input, masks, cfg.policy);

  Eigen::VectorXd y(static_cast<Eigen::Index>(samples));
  Eigen::VectorXd w(static_cast<Eigen::Index>(samples));
  for (std::size_t s = 0; s < samples; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    y(si) = outputs[s].probs[static_cast<std::size_t>(target)];
    // Cosine distance between the binary sample and the all-ones vector.
    const double kept = z.row(si).sum();
    const double distance = 1.0 - std::sqrt(kept / static_cast<double>(n));
    w(si) = std::exp(-(distance * distance) / (cfg.lime_kernel_width * cfg.lime_kernel_width));
  }

  auto fit = [&](const std::vector<Eigen::Index>& cols) {
    const auto k = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd a(z.rows(), k + 1);
    for (Eigen::Index c = 0; c < k; ++c) a.col(c) = z.col(cols[static_cast<std::size_t>(c)]);
    a.col(k).setOnes();
    Eigen::MatrixXd ata = a.transpose() * w.asDiagonal() * a;
    for (Eigen::Index c = 0; c < k; ++c) ata(c, c) += cfg.lime_ridge;  // intercept unpenalized
    const Eigen::VectorXd beta = ata.ldlt().solve(a.transpose() * w.asDiagonal() * y);
    std::vector<double> out(n, 0.0);
    for (Eigen::Index c = 0; c < k; ++c)
      out[static_cast<std::size_t>(cols[static_cast<std::size_t>(c)])] = beta(c);
    return out;
  };

  std::vector<Eigen::Index> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> coef = fit(all);
  if (cfg.lime_top_k > 0 && static_cast<std::size_t>(cfg.lime_top_k) < n) {
    std::stable_sort(all.begin(), all.end(), [&](Eigen::Index a, Eigen::Index b) {
      return std::abs(coef[static_cast<std::size_t>(a)]) > std::abs(coef[static_cast<std::size_t>(b)]);
    });
    all.resize(static_cast<std::size_t>(cfg.lime_top_k));
    std::sort(all.begin(), all.end());
    coef = fit(all);
  }
  return coef;
}

}  // namespace

std::vector<double> integrated_gradients(const Classifier& model, const ChunkedInput& input,
                                         ClassId target, int steps, ExecutionPolicy policy) {
  INTEVAL_EXPECT(steps >= 1, "integrated gradients needs at least one step");
  require_gradients(model, Method::kIntegratedGradients);
  const Eigen::MatrixXd x = model.embed(input);
  std::vector<Eigen::MatrixXd> grads(static_cast<std::size_t>(steps));
  for_each_index(grads.size(), policy, [&](std::size_t s) {
    const double alpha = static_cast<double>(s + 1) / static_cast<double>(steps);
    const Eigen::MatrixXd xs = alpha * x;
    grads[s] = model.forward(input, xs, grad_options(target, GradMode::kGradient)).input_grad;
  });
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (const auto& g : grads) avg += g;
  avg /= static_cast<double>(steps);
  return row_sums(x.cwiseProduct(avg));
}

TokenScores attribute(const Classifier& model, const ChunkedInput& input, Method method,
                      const AttributionConfig& cfg) {
  TokenScores out;
  out.case_id = input.case_id;
  out.method = method;
  out.target = cfg.target ? *cfg.target : model.predict(input).predicted;

  switch (method) {
    case Method::kRandom:
      out.scores = random_scores(input, cfg.seed);
      break;
    case Method::kAttention: {
      require_attention(model, method);
      out.scores = model.predict(input).token_attn;
      break;
    }
    case Method::kScaledAttention: {
      require_attention(model, method);
      require_gradients(model, method);
      const auto r = model.forward(input, model.embed(input),
                                   grad_options(out.target, GradMode::kGradient));
      out.scores.resize(r.token_attn.size());
      for (std::size_t i = 0; i < r.token_attn.size(); ++i)
        out.scores[i] = r.token_attn[i] * r.attn_grad[i];
      break;
    }
    case Method::kIntegratedGradients:
      out.scores = integrated_gradients(model, input, out.target, cfg.ig_steps, cfg.policy);
      break;
    case Method::kInputXGrad: {
      require_gradients(model, method);
      const Eigen::MatrixXd x = model.embed(input);
      const auto r = model.forward(input, x, grad_options(out.target, GradMode::kGradient));
      out.scores = row_sums(x.cwiseProduct(r.input_grad));
      break;
    }
    case Method::kDeepLift: {
      require_gradients(model, method);
      const Eigen::MatrixXd x = model.embed(input);
      const Eigen::MatrixXd reference = Eigen::MatrixXd::Zero(x.rows(), x.cols());
      ForwardOptions o = grad_options(out.target, GradMode::kDeepLift);
      o.reference = &reference;
      const auto r = model.forward(input, x, o);
      out.scores = row_sums((x - reference).cwiseProduct(r.input_grad));
      break;
    }
    case Method::kLime:
      out.scores = lime_scores(model, input, out.target, cfg);
      break;
  }

  if (out.scores.size() != input.token_count())
    throw NumericalError(fmt::format("{} produced {} scores for {} tokens", to_string(method),
                                     out.scores.size(), input.token_count()));
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    if (!std::isfinite(out.scores[i]))
      throw NumericalError(fmt::format("{} score at token {} of {} is not finite",
                                       to_string(method), i, input.case_id));
  }
  return out;
}

}  // namespace inteval::attribution
