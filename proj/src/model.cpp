#include <cmath>

#include "inteval/error.hpp"
#include "inteval/model.hpp"

namespace inteval::model {

std::vector<double> MaskSpec::keep_weights(std::size_t n) const {
  std::vector<double> w;
  if (soft) {
    INTEVAL_EXPECT(soft->size() == n, "soft mask length does not match token count");
    w = *soft;
    for (double v : w) INTEVAL_EXPECT(v >= 0.0 && v <= 1.0, "soft mask weight outside [0,1]");
  } else {
    w.assign(n, 0.0);
    for (const Span& s : spans) {
      INTEVAL_EXPECT(s.start <= s.end && s.end <= n, "mask span out of range");
      for (std::size_t i = s.start; i < s.end; ++i) w[i] = 1.0;
    }
  }
  if (mode == MaskMode::kRemove)
    for (double& v : w) v = 1.0 - v;
  return w;
}

ClassId argmax(const Probs& p) {
  return p[kViolationClass] > p[kNoViolationClass] ? kViolationClass : kNoViolationClass;
}

Probs softmax2(const Eigen::Vector2d& logits) {
  const double m = logits.maxCoeff();
  const double e0 = std::exp(logits(0) - m);
  const double e1 = std::exp(logits(1) - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

Eigen::MatrixXd Classifier::masked_embeddings(const ChunkedInput& input,
                                              const MaskSpec& mask) const {
  const std::size_t n = input.token_count();
  const std::vector<double> w = mask.keep_weights(n);
  if (mask.is_hard()) {
    ChunkedInput masked = input;
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] == 0.0) {
        const auto& pos = masked.token_map[i];
        masked.chunks[static_cast<std::size_t>(pos.chunk)][static_cast<std::size_t>(pos.offset)] =
            input.pad_id;
      }
    }
    return embed(masked);
  }
  Eigen::MatrixXd x = embed(input);
  for (std::size_t i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i)) *= w[i];
  return x;
}

ClassifierOutput Classifier::predict(const ChunkedInput& input, const MaskSpec* mask) const {
  const Eigen::MatrixXd x = mask ? masked_embeddings(input, *mask) : embed(input);
  ForwardResult r = forward(input, x, ForwardOptions{});
  ClassifierOutput out;
  out.probs = r.probs;
  out.predicted = argmax(r.probs);
  out.logits = r.logits;
  out.chunk_attn = std::move(r.chunk_attn);
  out.token_attn = std::move(r.token_attn);
  return out;
}

std::vector<ClassifierOutput> predict_batch(const Classifier& model,
                                            const ChunkedInput& input,
                                            const std::vector<MaskSpec>& masks,
                                            ExecutionPolicy policy) {
  std::vector<ClassifierOutput> out(masks.size());
  for_each_index(masks.size(), policy,
                 [&](std::size_t i) { out[i] = model.predict(input, &masks[i]); });
  return out;
}

Introspection introspect(const Classifier& model, const ChunkedInput& input, ClassId target) {
  if (!model.supports_gradients())
    throw CapabilityError("backend '" + model.backend() + "' has no gradient support");
  ForwardOptions opts;
  opts.target = target;
  opts.objective = Objective::kLogit;
  opts.grad = GradMode::kGradient;
  ForwardResult r = model.forward(input, model.embed(input), opts);
  return {std::move(r.token_attn), std::move(r.input_grad), std::move(r.chunk_attn)};
}

// --- ConstantClassifier ------------------------------------------------------

ConstantClassifier::ConstantClassifier(Probs probs, Eigen::Index dim) : probs_(probs), dim_(dim) {
  INTEVAL_EXPECT(probs[0] >= 0 && probs[1] >= 0 && std::abs(probs[0] + probs[1] - 1.0) < 1e-9,
                 "constant classifier needs a distribution");
}

Eigen::MatrixXd ConstantClassifier::embed(const ChunkedInput& input) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input.token_count()), dim_);
  for (std::size_t i = 0; i < input.token_count(); ++i) {
    const int id = input.token_at(i);
    for (Eigen::Index d = 0; d < dim_; ++d)
      x(static_cast<Eigen::Index>(i), d) = id == input.pad_id ? 0.0 : std::sin(1.0 + id * (d + 1));
  }
  return x;
}

ForwardResult ConstantClassifier::forward(const ChunkedInput& layout,
                                          const Eigen::MatrixXd& embeddings,
                                          const ForwardOptions& options) const {
  ForwardResult r;
  r.probs = probs_;
  r.logits = Eigen::Vector2d(std::log(std::max(probs_[0], 1e-300)),
                             std::log(std::max(probs_[1], 1e-300)));
  r.objective = options.objective == Objective::kLogit ? r.logits(options.target)
                                                       : std::log(probs_[options.target]);
  const std::size_t n = layout.token_count();
  r.token_attn.assign(n, 1.0 / static_cast<double>(n));
  r.chunk_attn.assign(layout.chunk_count(), 1.0 / static_cast<double>(layout.chunk_count()));
  if (options.grad != GradMode::kNone) {
    r.input_grad = Eigen::MatrixXd::Zero(embeddings.rows(), embeddings.cols());
    r.attn_grad.assign(n, 0.0);
  }
  return r;
}

// --- LinearBowClassifier -----------------------------------------------------

LinearBowClassifier::LinearBowClassifier(std::vector<double> weights, double bias)
    : weights_(std::move(weights)), bias_(bias) {}

Eigen::MatrixXd LinearBowClassifier::embed(const ChunkedInput& input) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input.token_count()), 1);
  for (std::size_t i = 0; i < input.token_count(); ++i)
    x(static_cast<Eigen::Index>(i), 0) = input.token_at(i) == input.pad_id ? 0.0 : 1.0;
  return x;
}

ForwardResult LinearBowClassifier::forward(const ChunkedInput& layout,
                                           const Eigen::MatrixXd& embeddings,
                                           const ForwardOptions& options) const {
  const auto n = static_cast<Eigen::Index>(layout.token_count());
  INTEVAL_EXPECT(embeddings.rows() == n && embeddings.cols() == 1, "embedding shape mismatch");
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = layout.token_at(static_cast<std::size_t>(i));
    w(i) = id >= 0 && static_cast<std::size_t>(id) < weights_.size()
               ? weights_[static_cast<std::size_t>(id)]
               : 0.0;
  }
  ForwardResult r;
  r.logits = Eigen::Vector2d(0.0, bias_ + w.dot(embeddings.col(0)));
  r.probs = softmax2(r.logits);
  r.chunk_attn.assign(layout.chunk_count(), 1.0 / static_cast<double>(layout.chunk_count()));
  if (options.grad == GradMode::kNone) {
    r.objective = options.objective == Objective::kLogit ? r.logits(options.target)
                                                         : std::log(r.probs[options.target]);
    return r;
  }
  // d logit_1 / dx = w, d logit_0 / dx = 0; log-prob adds the softmax Jacobian.
  const double sign_target = options.target == kViolationClass ? 1.0 : 0.0;
  double coef = sign_target;
  if (options.objective == Objective::kLogProb) {
    coef = sign_target - r.probs[kViolationClass];
    r.objective = std::log(r.probs[options.target]);
  } else {
    r.objective = r.logits(options.target);
  }
  // The model is linear in x, so gradient and DeepLift multipliers agree.
  r.input_grad = (coef * w).eval();
  r.attn_grad.assign(static_cast<std::size_t>(n), 0.0);
  return r;
}

}  // namespace inteval::model
