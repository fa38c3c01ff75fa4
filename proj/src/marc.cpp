#include "inteval/marc.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "inteval/error.hpp"

namespace inteval::marc {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// One noisy draw of the masked forward passes.
struct Draw {
  Eigen::MatrixXd noise_keep;
  Eigen::MatrixXd noise_comp;
  std::vector<bool> drop_keep;  // mask forced to 0 in the kept input
  std::vector<bool> fill_comp;  // mask forced to 1 before taking the complement
};

Draw make_draw(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, const MarcConfig& cfg) {
  Draw d;
  std::normal_distribution<double> noise(0.0, 1.0);
  d.noise_keep.resize(rows, cols);
  d.noise_comp.resize(rows, cols);
  for (Eigen::Index i = 0; i < d.noise_keep.size(); ++i) d.noise_keep(i) = cfg.noise_std * noise(rng);
  for (Eigen::Index i = 0; i < d.noise_comp.size(); ++i) d.noise_comp(i) = cfg.noise_std * noise(rng);
  std::bernoulli_distribution flip(cfg.flip_fraction);
  d.drop_keep.resize(static_cast<std::size_t>(rows));
  d.fill_comp.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) d.drop_keep[static_cast<std::size_t>(i)] = flip(rng);
  for (Eigen::Index i = 0; i < rows; ++i) d.fill_comp[static_cast<std::size_t>(i)] = flip(rng);
  return d;
}

struct Evaluation {
  LossTerms terms;
  std::vector<double> dlambda;  // filled when gradients are requested
};

Evaluation evaluate(const model::Classifier& model, const model::ChunkedInput& input,
                    const Eigen::MatrixXd& x, const std::vector<double>& lambda, ClassId y_hat,
                    const MarcConfig& cfg, const Draw& draw, bool with_grad) {
  const auto n = static_cast<Eigen::Index>(lambda.size());
  Eigen::MatrixXd keep(n, x.cols()), comp(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const double mk = draw.drop_keep[u] ? 0.0 : lambda[u];
    const double mc = draw.fill_comp[u] ? 0.0 : 1.0 - lambda[u];
    keep.row(i) = mk * x.row(i) + draw.noise_keep.row(i);
    comp.row(i) = mc * x.row(i) + draw.noise_comp.row(i);
  }
  model::ForwardOptions o;
  o.target = y_hat;
  o.objective = model::Objective::kLogProb;
  o.grad = with_grad ? model::GradMode::kGradient : model::GradMode::kNone;
  const auto rk = model.forward(input, keep, o);
  const auto rc = model.forward(input, comp, o);

  Evaluation e;
  // Likelihoods enter as probabilities, so both terms saturate once the kept
  // input predicts y_hat and the complement no longer does; dp = p * dlog p.
  const double pk = std::exp(rk.objective);
  const double pc = std::exp(rc.objective);
  e.terms.sufficiency = -pk;
  e.terms.comprehensiveness = pc;
  double mean = 0.0, rough = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    mean += lambda[i];
    if (i + 1 < lambda.size()) rough += (lambda[i] - lambda[i + 1]) * (lambda[i] - lambda[i + 1]);
  }
  e.terms.sparsity = cfg.alpha_lambda * mean / static_cast<double>(lambda.size());
  e.terms.compactness = cfg.alpha_sigma * rough;

  const std::pair<const char*, double> named[] = {
      {"sufficiency", e.terms.sufficiency},
      {"comprehensiveness", e.terms.comprehensiveness},
      {"sparsity", e.terms.sparsity},
      {"compactness", e.terms.compactness}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v))
      throw NumericalError(fmt::format("MaRC {} term is not finite for {}", name, input.case_id));
  if (!with_grad) return e;

  e.dlambda.assign(lambda.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(lambda.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    double g = cfg.alpha_lambda * inv_n;
    if (!draw.drop_keep[u]) g -= pk * rk.input_grad.row(i).dot(x.row(i));
    if (!draw.fill_comp[u]) g -= pc * rc.input_grad.row(i).dot(x.row(i));
    if (u + 1 < lambda.size()) g += 2.0 * cfg.alpha_sigma * (lambda[u] - lambda[u + 1]);
    if (u > 0) g -= 2.0 * cfg.alpha_sigma * (lambda[u - 1] - lambda[u]);
    e.dlambda[u] = g;
  }
  return e;
}

}  // namespace

void MarcConfig::validate() const {
  if (alpha_lambda < 0 || alpha_sigma < 0 || noise_std < 0 || learning_rate < 0)
    throw ConfigError("MaRC weights, noise and learning rate must be non-negative");
  if (flip_fraction < 0 || flip_fraction >= 0.5)
    throw ConfigError("MaRC flip_fraction must lie in [0, 0.5)");
  if (sigma_init <= 0 || sigma_min <= 0) throw ConfigError("MaRC sigma must be positive");
  if (steps < 0) throw ConfigError("MaRC steps must be non-negative");
}

MaskParams initial_params(std::size_t tokens, const MarcConfig& cfg) {
  return {std::vector<double>(tokens, cfg.omega_init), std::vector<double>(tokens, cfg.sigma_init)};
}

SoftMask mask_from_params(const MaskParams& params, ExecutionPolicy policy) {
  INTEVAL_EXPECT(params.omega.size() == params.sigma.size(), "omega and sigma differ in length");
  for (double s : params.sigma) INTEVAL_EXPECT(s > 0.0, "sigma must be positive");
  SoftMask m;
  m.params = params;
  m.lambda = kernels::gaussian_mix(params.omega, params.sigma, policy);
  for (double& v : m.lambda) v = sigmoid(v);
  return m;
}

LossTerms marc_loss(const model::Classifier& model, const model::ChunkedInput& input,
                    const SoftMask& mask, ClassId y_hat, const MarcConfig& cfg,
                    std::uint64_t seed) {
  INTEVAL_EXPECT(mask.lambda.size() == input.token_count(), "mask length does not match document");
  const Eigen::MatrixXd x = model.embed(input);
  std::mt19937_64 rng(seed);
  const Draw draw = make_draw(rng, x.rows(), x.cols(), cfg);
  return evaluate(model, input, x, mask.lambda, y_hat, cfg, draw, false).terms;
}

SoftMask optimize_mask(const model::Classifier& model, const model::ChunkedInput& input,
                       const MarcConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!model.supports_gradients())
    throw CapabilityError("MaRC needs gradients; backend '" + model.backend() + "' has none");
  const std::size_t n = input.token_count();
  const ClassId y_hat = cfg.gold_label ? *cfg.gold_label : model.predict(input).predicted;
  const Eigen::MatrixXd x = model.embed(input);
  const double sigma_max = std::max(cfg.sigma_min, static_cast<double>(n));

  MaskParams params = initial_params(n, cfg);
  std::vector<double> m_w(n, 0.0), v_w(n, 0.0), m_s(n, 0.0), v_s(n, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::mt19937_64 rng(seed);
  std::vector<LossTerms> trace;
  trace.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 1; step <= cfg.steps; ++step) {
    const SoftMask current = mask_from_params(params, cfg.policy);
    const Draw draw = make_draw(rng, x.rows(), x.cols(), cfg);
    Evaluation e;
    try {
      e = evaluate(model, input, x, current.lambda, y_hat, cfg, draw, true);
    } catch (const NumericalError& err) {
      throw NumericalError(fmt::format("{} (step {}, {} completed)", err.what(), step, trace.size()));
    }
    trace.push_back(e.terms);

    std::vector<double> dz(n);
    for (std::size_t i = 0; i < n; ++i)
      dz[i] = e.dlambda[i] * current.lambda[i] * (1.0 - current.lambda[i]);
    const auto [d_omega, d_sigma] =
        kernels::gaussian_mix_backward(params.omega, params.sigma, dz, cfg.policy);

    const double c1 = 1.0 - std::pow(beta1, step);
    const double c2 = 1.0 - std::pow(beta2, step);
    for (std::size_t i = 0; i < n; ++i) {
      m_w[i] = beta1 * m_w[i] + (1 - beta1) * d_omega[i];
      v_w[i] = beta2 * v_w[i] + (1 - beta2) * d_omega[i] * d_omega[i];
      params.omega[i] -= cfg.learning_rate * (m_w[i] / c1) / (std::sqrt(v_w[i] / c2) + eps);
      m_s[i] = beta1 * m_s[i] + (1 - beta1) * d_sigma[i];
      v_s[i] = beta2 * v_s[i] + (1 - beta2) * d_sigma[i] * d_sigma[i];
      params.sigma[i] -= cfg.learning_rate * (m_s[i] / c1) / (std::sqrt(v_s[i] / c2) + eps);
      params.sigma[i] = std::clamp(params.sigma[i], cfg.sigma_min, sigma_max);
    }
  }

  SoftMask out = mask_from_params(params, cfg.policy);
  out.trace = std::move(trace);
  return out;
}

RationaleSet binarize(const SoftMask& mask, double threshold, const std::string& case_id) {
  RationaleSet r;
  r.case_id = case_id;
  r.technique = Technique::kMarc;
  const auto& l = mask.lambda;
  for (std::size_t i = 0; i < l.size();) {
    if (l[i] < threshold) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < l.size() && l[j] >= threshold) ++j;
    r.spans.push_back({i, j});
    i = j;
  }
  return r;
}

}  // namespace inteval::marc
