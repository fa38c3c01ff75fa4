#include "inteval/autodiff.hpp"

#include <cmath>

#include "inteval/error.hpp"

namespace inteval::ad {

const Matrix& Var::value() const { return tape->node(id).value; }
const Matrix& Var::grad() const { return tape->node(id).grad; }

int Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Matrix value) { return {this, push(std::move(value), false, {})}; }

Var Tape::variable(Matrix value) { return {this, push(std::move(value), true, {})}; }

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = node(id);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var output, double seed) {
  INTEVAL_EXPECT(output.tape == this, "backward on a foreign tape");
  INTEVAL_EXPECT(output.rows() == 1 && output.cols() == 1, "backward needs a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  node(output.id).grad = Matrix::Constant(1, 1, seed);
  for (int i = output.id; i >= 0; --i) {
    Node& n = node(i);
    if (!n.needs_grad || !n.back || n.grad.size() == 0) continue;
    n.back(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.needs_grad && n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
}

namespace {

bool any_grad(Var a) { return a.tape->node(a.id).needs_grad; }
bool any_grad(Var a, Var b) { return any_grad(a) || any_grad(b); }

void same_tape(Var a, Var b) {
  INTEVAL_EXPECT(a.tape == b.tape, "operands live on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  INTEVAL_EXPECT(a.cols() == b.rows(), "matmul shape mismatch");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id;
  Matrix v = a.value() * b.value();
  return {&t, t.push(std::move(v), any_grad(a, b), [ia, ib](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            if (tp.node(ia).needs_grad) tp.accumulate(ia, g * tp.node(ib).value.transpose());
            if (tp.node(ib).needs_grad) tp.accumulate(ib, tp.node(ia).value.transpose() * g);
          })};
}

Var add(Var a, Var b) {
  same_tape(a, b);
  INTEVAL_EXPECT(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id;
  Matrix v = a.value() + b.value();
  return {&t, t.push(std::move(v), any_grad(a, b), [ia, ib](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            tp.accumulate(ia, g);
            tp.accumulate(ib, g);
          })};
}

Var add_row(Var a, Var row) {
  same_tape(a, row);
  INTEVAL_EXPECT(row.rows() == 1 && row.cols() == a.cols(), "add_row shape mismatch");
  Tape& t = *a.tape;
  const int ia = a.id, ir = row.id;
  Matrix v = a.value().rowwise() + row.value().row(0);
  return {&t, t.push(std::move(v), any_grad(a, row), [ia, ir](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            tp.accumulate(ia, g);
            if (tp.node(ir).needs_grad) tp.accumulate(ir, g.colwise().sum());
          })};
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  const int ia = a.id;
  return {&t, t.push(a.value() * s, any_grad(a), [ia, s](Tape& tp, int self) {
            tp.accumulate(ia, tp.node(self).grad * s);
          })};
}

Var scale_rows(Var a, Var s) {
  same_tape(a, s);
  INTEVAL_EXPECT(s.cols() == 1 && s.rows() == a.rows(), "scale_rows shape mismatch");
  Tape& t = *a.tape;
  const int ia = a.id, is = s.id;
  Matrix v = s.value().col(0).asDiagonal() * a.value();
  return {&t, t.push(std::move(v), any_grad(a, s), [ia, is](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            if (tp.node(ia).needs_grad)
              tp.accumulate(ia, tp.node(is).value.col(0).asDiagonal() * g);
            if (tp.node(is).needs_grad)
              tp.accumulate(is, g.cwiseProduct(tp.node(ia).value).rowwise().sum());
          })};
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix v = a.value().array().tanh().matrix();
  return {&t, t.push(std::move(v), any_grad(a), [ia](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            const Matrix& y = tp.node(self).value;
            Matrix mult = (1.0 - y.array().square()).matrix();
            if (const Tape* ref = tp.reference()) {
              const Matrix& x = tp.node(ia).value;
              const Matrix& x0 = ref->node(ia).value;
              const Matrix& y0 = ref->node(self).value;
              INTEVAL_EXPECT(x0.rows() == x.rows() && x0.cols() == x.cols(),
                             "reference tape does not match");
              for (Eigen::Index i = 0; i < x.size(); ++i) {
                const double dx = x(i) - x0(i);
                if (std::abs(dx) > 1e-7) mult(i) = (y(i) - y0(i)) / dx;
              }
            }
            tp.accumulate(ia, g.cwiseProduct(mult));
          })};
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix v = a.value();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp().matrix();
    v.row(r) /= v.row(r).sum();
  }
  return {&t, t.push(std::move(v), any_grad(a), [ia](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            const Matrix& y = tp.node(self).value;
            Matrix gy = g.cwiseProduct(y);
            Eigen::VectorXd dots = gy.rowwise().sum();
            Matrix out = gy - y.cwiseProduct(dots.replicate(1, y.cols()));
            tp.accumulate(ia, out);
          })};
}

Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix v = a.value();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    const double lse = m + std::log((v.row(r).array() - m).exp().sum());
    v.row(r).array() -= lse;
  }
  return {&t, t.push(std::move(v), any_grad(a), [ia](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            const Matrix& y = tp.node(self).value;
            Matrix p = y.array().exp().matrix();
            Eigen::VectorXd sums = g.rowwise().sum();
            tp.accumulate(ia, g - p.cwiseProduct(sums.replicate(1, p.cols())));
          })};
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix v = a.value().transpose();
  return {&t, t.push(std::move(v), any_grad(a), [ia](Tape& tp, int self) {
            tp.accumulate(ia, tp.node(self).grad.transpose());
          })};
}

Var row_slice(Var a, Eigen::Index start, Eigen::Index count) {
  INTEVAL_EXPECT(start >= 0 && count >= 0 && start + count <= a.rows(), "row_slice out of range");
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix v = a.value().middleRows(start, count);
  return {&t, t.push(std::move(v), any_grad(a), [ia, start, count](Tape& tp, int self) {
            const Matrix& src = tp.node(ia).value;
            Matrix g = Matrix::Zero(src.rows(), src.cols());
            g.middleRows(start, count) = tp.node(self).grad;
            tp.accumulate(ia, g);
          })};
}

Var col_slice(Var a, Eigen::Index start, Eigen::Index count) {
  INTEVAL_EXPECT(start >= 0 && count >= 0 && start + count <= a.cols(), "col_slice out of range");
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix v = a.value().middleCols(start, count);
  return {&t, t.push(std::move(v), any_grad(a), [ia, start, count](Tape& tp, int self) {
            const Matrix& src = tp.node(ia).value;
            Matrix g = Matrix::Zero(src.rows(), src.cols());
            g.middleCols(start, count) = tp.node(self).grad;
            tp.accumulate(ia, g);
          })};
}

Var concat_rows(const std::vector<Var>& parts) {
  INTEVAL_EXPECT(!parts.empty(), "concat_rows of nothing");
  Tape& t = *parts.front().tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  bool needs = false;
  std::vector<int> ids;
  for (const Var& p : parts) {
    INTEVAL_EXPECT(p.tape == &t && p.cols() == cols, "concat_rows shape mismatch");
    rows += p.rows();
    needs = needs || any_grad(p);
    ids.push_back(p.id);
  }
  Matrix v(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return {&t, t.push(std::move(v), needs, [ids](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            Eigen::Index off = 0;
            for (int id : ids) {
              const Eigen::Index n = tp.node(id).value.rows();
              if (tp.node(id).needs_grad) tp.accumulate(id, g.middleRows(off, n));
              off += n;
            }
          })};
}

Var concat_cols(const std::vector<Var>& parts) {
  INTEVAL_EXPECT(!parts.empty(), "concat_cols of nothing");
  Tape& t = *parts.front().tape;
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  bool needs = false;
  std::vector<int> ids;
  for (const Var& p : parts) {
    INTEVAL_EXPECT(p.tape == &t && p.rows() == rows, "concat_cols shape mismatch");
    cols += p.cols();
    needs = needs || any_grad(p);
    ids.push_back(p.id);
  }
  Matrix v(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return {&t, t.push(std::move(v), needs, [ids](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            Eigen::Index off = 0;
            for (int id : ids) {
              const Eigen::Index n = tp.node(id).value.cols();
              if (tp.node(id).needs_grad) tp.accumulate(id, g.middleCols(off, n));
              off += n;
            }
          })};
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  const double n = static_cast<double>(a.rows());
  Matrix v = a.value().colwise().mean();
  return {&t, t.push(std::move(v), any_grad(a), [ia, n](Tape& tp, int self) {
            const Matrix& g = tp.node(self).grad;
            const Eigen::Index rows = tp.node(ia).value.rows();
            tp.accumulate(ia, (g / n).replicate(rows, 1));
          })};
}

Var element(Var a, Eigen::Index r, Eigen::Index c) {
  INTEVAL_EXPECT(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), "element out of range");
  Tape& t = *a.tape;
  const int ia = a.id;
  Matrix v = Matrix::Constant(1, 1, a.value()(r, c));
  return {&t, t.push(std::move(v), any_grad(a), [ia, r, c](Tape& tp, int self) {
            const Matrix& src = tp.node(ia).value;
            Matrix g = Matrix::Zero(src.rows(), src.cols());
            g(r, c) = tp.node(self).grad(0, 0);
            tp.accumulate(ia, g);
          })};
}

}  // namespace inteval::ad
