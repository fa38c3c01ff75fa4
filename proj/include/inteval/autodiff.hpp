#pragma once

// Minimal reverse-mode differentiation over dense matrices. A Tape records the
// forward computation; backward() walks it in reverse. Two tapes built by the
// same sequence of operations have matching node ids, which is what the
// DeepLift rescale rule relies on (see set_reference).

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace inteval::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);  // leaf that receives a gradient

  // Seeds d(output)/d(output) = seed; output must be 1x1.
  void backward(Var output, double seed = 1.0);

  // When set, elementwise nonlinearities back-propagate the DeepLift rescale
  // multiplier (f(x) - f(x_ref)) / (x - x_ref) instead of f'(x). The reference
  // tape must have been built with the identical op sequence.
  void set_reference(const Tape* reference) { reference_ = reference; }
  const Tape* reference() const { return reference_; }

  std::size_t size() const { return nodes_.size(); }

  // --- internal, used by the op implementations ---
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, int)> back;
  };
  int push(Matrix value, bool needs_grad, std::function<void(Tape&, int)> back);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  void accumulate(int id, const Matrix& g);

 private:
  std::vector<Node> nodes_;
  const Tape* reference_ = nullptr;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a 1 x c row over every row of a
Var scale(Var a, double s);
Var scale_rows(Var a, Var s);  // s is n x 1; row i of a multiplied by s(i)
Var tanh(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var transpose(Var a);
Var row_slice(Var a, Eigen::Index start, Eigen::Index count);
Var col_slice(Var a, Eigen::Index start, Eigen::Index count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var mean_rows(Var a);  // 1 x c
Var element(Var a, Eigen::Index r, Eigen::Index c);

}  // namespace inteval::ad
