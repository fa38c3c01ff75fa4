#pragma once

// Classifier harness: chunked inputs, masks, and the abstract classifier
// interface every extractor and metric goes through.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "inteval/kernels.hpp"
#include "inteval/types.hpp"

namespace inteval {
class Vocabulary;
}

namespace inteval::model {

struct TokenPosition {
  int chunk = 0;
  int offset = 0;
};

struct ChunkedInput {
  std::string case_id;
  std::vector<std::vector<int>> chunks;
  std::vector<TokenPosition> token_map;  // global token index -> (chunk, offset)
  int pad_id = 0;

  std::size_t token_count() const { return token_map.size(); }
  std::size_t chunk_count() const { return chunks.size(); }
  // Global index of the first token of chunk k.
  std::size_t chunk_start(std::size_t k) const;
  // De-chunked token id sequence.
  std::vector<int> tokens() const;
  int token_at(std::size_t global) const;
};

// Splits a token-id sequence into consecutive chunks of at most max_chunk_len.
// Throws HarnessError on an empty sequence, ContractViolation when
// max_chunk_len < 16.
ChunkedInput chunk_tokens(const std::vector<int>& ids, std::string case_id,
                          std::size_t max_chunk_len, int pad_id);
ChunkedInput chunk_document(const CaseDocument& doc, const Vocabulary& vocab,
                            std::size_t max_chunk_len);

enum class MaskMode { kKeepOnly, kRemove };

// Either a hard selection (token spans) or per-token soft weights in [0,1].
struct MaskSpec {
  MaskMode mode = MaskMode::kKeepOnly;
  std::vector<Span> spans;
  std::optional<std::vector<double>> soft;

  static MaskSpec keep_only(std::vector<Span> spans) { return {MaskMode::kKeepOnly, std::move(spans), {}}; }
  static MaskSpec remove(std::vector<Span> spans) { return {MaskMode::kRemove, std::move(spans), {}}; }
  static MaskSpec keep_all(std::size_t n) { return keep_only({Span{0, n}}); }
  static MaskSpec keep_none() { return keep_only({}); }

  // Per-token keep weight (1 = token visible, 0 = replaced by pad).
  // Throws ContractViolation on out-of-range spans or weights outside [0,1].
  std::vector<double> keep_weights(std::size_t n) const;
  bool is_hard() const { return !soft.has_value(); }
};

struct ClassifierOutput {
  Probs probs{0.5, 0.5};
  ClassId predicted = kNoViolationClass;
  Eigen::Vector2d logits = Eigen::Vector2d::Zero();
  std::vector<double> chunk_attn;
  std::vector<double> token_attn;
};

// argmax with ties broken toward NO_VIOLATION.
ClassId argmax(const Probs& p);

enum class Objective { kLogit, kLogProb };
enum class GradMode { kNone, kGradient, kDeepLift };

struct ForwardOptions {
  ClassId target = kViolationClass;
  Objective objective = Objective::kLogit;
  GradMode grad = GradMode::kNone;
  // Input embeddings of the DeepLift reference (required for kDeepLift).
  const Eigen::MatrixXd* reference = nullptr;
};

struct ForwardResult {
  Eigen::Vector2d logits = Eigen::Vector2d::Zero();
  Probs probs{0.5, 0.5};
  double objective = 0.0;
  // Per-token attention summary, sums to 1 over the document.
  std::vector<double> token_attn;
  // Attention received by each chunk in the cross-chunk layer, sums to 1.
  std::vector<double> chunk_attn;
  // d objective / d input embeddings (n x d); DeepLift multipliers under
  // kDeepLift. Empty under kNone.
  Eigen::MatrixXd input_grad;
  // d objective / d token-level attention weights; empty under kNone.
  std::vector<double> attn_grad;
};

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string backend() const = 0;
  virtual bool supports_gradients() const = 0;
  virtual bool supports_attention() const = 0;
  virtual Eigen::Index embedding_dim() const = 0;

  // Input embeddings of each token, one row per global token index, pad
  // tokens embedded as-is.
  virtual Eigen::MatrixXd embed(const ChunkedInput& input) const = 0;

  // Runs the classifier on explicit input embeddings laid out by `layout`.
  virtual ForwardResult forward(const ChunkedInput& layout,
                                const Eigen::MatrixXd& embeddings,
                                const ForwardOptions& options) const = 0;

  // Hard masks substitute pad_id; soft masks scale input embeddings.
  ClassifierOutput predict(const ChunkedInput& input,
                           const MaskSpec* mask = nullptr) const;
  Eigen::MatrixXd masked_embeddings(const ChunkedInput& input,
                                    const MaskSpec& mask) const;
};

// Masked predictions for many masks of one document.
std::vector<ClassifierOutput> predict_batch(const Classifier& model,
                                            const ChunkedInput& input,
                                            const std::vector<MaskSpec>& masks,
                                            ExecutionPolicy policy);

struct Introspection {
  std::vector<double> token_attn;
  Eigen::MatrixXd gradients;  // d target logit / d input embeddings
  std::vector<double> chunk_attn;
};

// Throws CapabilityError when the backend has no gradient support.
Introspection introspect(const Classifier& model, const ChunkedInput& input,
                         ClassId target);

// Returns fixed probabilities regardless of input; all gradients are zero.
class ConstantClassifier : public Classifier {
 public:
  explicit ConstantClassifier(Probs probs, Eigen::Index dim = 4);

  std::string backend() const override { return "constant"; }
  bool supports_gradients() const override { return true; }
  bool supports_attention() const override { return true; }
  Eigen::Index embedding_dim() const override { return dim_; }
  Eigen::MatrixXd embed(const ChunkedInput& input) const override;
  ForwardResult forward(const ChunkedInput& layout, const Eigen::MatrixXd& embeddings,
                        const ForwardOptions& options) const override;

 private:
  Probs probs_;
  Eigen::Index dim_;
};

// logit(VIOLATION) = bias + sum_t weight[token_t] * x_t with one-dimensional
// embeddings x_t (1 for a present token, 0 for pad); logit(NO_VIOLATION) = 0.
// Analytic surrogate with known coefficients.
class LinearBowClassifier : public Classifier {
 public:
  LinearBowClassifier(std::vector<double> weights, double bias);

  std::string backend() const override { return "linear-bow"; }
  bool supports_gradients() const override { return true; }
  bool supports_attention() const override { return false; }
  Eigen::Index embedding_dim() const override { return 1; }
  Eigen::MatrixXd embed(const ChunkedInput& input) const override;
  ForwardResult forward(const ChunkedInput& layout, const Eigen::MatrixXd& embeddings,
                        const ForwardOptions& options) const override;

  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
  double bias_;
};

// Probability pair from two logits (numerically stable softmax).
Probs softmax2(const Eigen::Vector2d& logits);

}  // namespace inteval::model
