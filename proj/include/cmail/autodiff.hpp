#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "cmail/errors.hpp"

namespace cmail::la {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

// Trainable tensor: value and an additively-accumulated gradient of the same
// shape. The id is unique per process and keys optimizer state.
struct Parameter {
  Matrix value;
  Matrix grad;
  int id;

  Parameter();
  explicit Parameter(Matrix v);

  void zero_grad() { grad.setZero(); }
};

void zero_grads(const std::vector<Parameter*>& params);

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Reverse-mode computation tape over dense matrices. Nodes are appended in
// evaluation order, so a single reverse sweep is a valid topological order.
// One tape per forward pass; not shareable across threads.
class Tape {
 public:
  Var leaf(Parameter& p);
  Var constant(Matrix v);

  // Seeds d(loss)/d(loss) = 1 and pulls gradients back to every Parameter
  // leaf, accumulating into Parameter::grad. loss must be 1x1.
  void backward(Var loss);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  Matrix& grad_ref(int id) { return nodes_[id].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Used by the op builders in autodiff.cpp; pull reads grad(self) and
  // accumulates into its parents' grads.
  Var emit(Matrix value, std::function<void(Tape&, int)> pull);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, int)> pull;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<int, Parameter*>> leaves_;
};

// ---- op set (free functions, all shape-checked) ----

Var matmul(Var a, Var b);
Var add(Var a, Var b);                   // same shape
Var add_row_broadcast(Var a, Var bias);  // (B x n) + (1 x n)
Var scale(Var x, double c);
Var tanh(Var x);
Var clamp(Var x, double lo, double hi);
Var replicate_rows(Var row, int n);                     // (1 x n) -> (B x n)
Var gather_rows(Var x, std::vector<int> idx);           // embedding-style row select
Var concat_cols(Var a, Var b);
Var slice_cols(Var x, int begin, int width);
// Row-wise product of a 1 x r strategy vector with an r x h matrix stored
// flat (row-major) per sample: out.row(i) = phi.row(i) * reshape(gflat.row(i)).
Var row_bilinear(Var phi, Var gflat, int r, int h);

Var sum_all(Var x);   // 1x1
Var mean_all(Var x);  // 1x1
Var sum_squares(Var x);

// Mean negative log-likelihood of integer targets under row logits.
Var nll_categorical(Var logits, std::vector<int> targets);
// Mean cross-entropy of full target distributions under row logits.
Var xent_rows(Var logits, Matrix target_probs);
// Mean diagonal-Gaussian negative log-density of actions (B x d each).
Var gaussian_nll(Var mean, Var log_std, Matrix actions);

// ---- tape-free numeric helpers shared with inference paths ----

// Numerically stable softmax of one logit row.
RowVector softmax_row(const RowVector& logits);
double log_softmax_at(const RowVector& logits, int index);

}  // namespace cmail::la
