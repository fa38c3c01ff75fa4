#pragma once

// Desk-scale hierarchical transformer surrogate: per-chunk self-attention and
// attention pooling, one multi-head cross-attention layer over chunk vectors,
// mean pooling, linear head.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "inteval/autodiff.hpp"
#include "inteval/model.hpp"
#include "inteval/tokenizer.hpp"

namespace inteval::model {

struct TransformerConfig {
  int vocab_size = 0;
  int d_model = 16;
  int heads = 2;
  int max_chunk_len = 64;
  std::uint64_t seed = 7;
};

struct TrainConfig {
  int epochs = 12;
  int batch_size = 16;
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  // Probability of replacing a training token with pad, so that the model has
  // seen partially masked inputs.
  double token_dropout = 0.1;
  std::uint64_t seed = 11;
  ExecutionPolicy policy = ExecutionPolicy::kParallel;
};

struct Example {
  ChunkedInput input;
  ClassId label = kNoViolationClass;
  std::string article;  // for per-article breakdowns; may be empty
};

struct EvalReport {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::map<std::string, double> per_article_f1;
  int n = 0;
};

struct FitReport {
  std::vector<double> epoch_loss;
  EvalReport test;
};

class TransformerClassifier : public Classifier {
 public:
  explicit TransformerClassifier(const TransformerConfig& cfg);

  std::string backend() const override { return "hier-transformer"; }
  bool supports_gradients() const override { return true; }
  bool supports_attention() const override { return true; }
  Eigen::Index embedding_dim() const override { return cfg_.d_model; }
  Eigen::MatrixXd embed(const ChunkedInput& input) const override;
  ForwardResult forward(const ChunkedInput& layout, const Eigen::MatrixXd& embeddings,
                        const ForwardOptions& options) const override;

  // Adam on cross-entropy. Throws TrainingError on a non-finite loss.
  FitReport fit(const std::vector<Example>& train, const std::vector<Example>& test,
                const TrainConfig& cfg);

  const TransformerConfig& config() const { return cfg_; }

  // Flat list of named parameter matrices (embedding table first).
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> parameters();
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> parameters() const;

 private:
  struct Graph;
  Graph build(ad::Tape& tape, const ChunkedInput& layout, const Eigen::MatrixXd& embeddings,
              bool params_trainable) const;

  TransformerConfig cfg_;
  Eigen::MatrixXd embedding_;  // vocab x d, pad row fixed at zero
  Eigen::MatrixXd wq_, wk_, wv_, wo_, w1_, b1_, pool_;
  Eigen::MatrixXd cq_, ck_, cv_, co_;
  Eigen::MatrixXd head_, head_bias_;
};

EvalReport evaluate_classifier(const Classifier& model, const std::vector<Example>& data,
                               ExecutionPolicy policy = ExecutionPolicy::kParallel);

double macro_f1(const std::vector<ClassId>& gold, const std::vector<ClassId>& predicted);

// Checkpoint directory: config.json, vocab.txt, weights.bin.
struct Checkpoint {
  TransformerClassifier model;
  Vocabulary vocab;
  TrainConfig train;
};

void save_checkpoint(const std::filesystem::path& dir, const TransformerClassifier& model,
                     const Vocabulary& vocab, const TrainConfig& train);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace inteval::model
