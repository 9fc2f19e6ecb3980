#include "cmail/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace cmail::la {

namespace {

std::atomic<int> g_next_param_id{0};

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a) +
                         " does not match shape " + shape_str(b));
  }
}

}  // namespace

Parameter::Parameter() : id(g_next_param_id++) {}

Parameter::Parameter(Matrix v)
    : value(std::move(v)),
      grad(Matrix::Zero(value.rows(), value.cols())),
      id(g_next_param_id++) {}

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::emit(Matrix value, std::function<void(Tape&, int)> pull) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(pull)});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Parameter& p) {
  Var v = emit(p.value, nullptr);
  leaves_.emplace_back(v.id, &p);
  return v;
}

Var Tape::constant(Matrix v) { return emit(std::move(v), nullptr); }

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ValidationError("backward: loss lives on a different tape");
  const Matrix& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ValidationError("backward: loss must be a 1x1 scalar node, got " + shape_str(lv));
  }
  for (Node& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[loss.id].grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].pull) nodes_[i].pull(*this, i);
  }
  for (auto& [id, param] : leaves_) {
    param->grad += nodes_[id].grad;
  }
}

// ---- ops ----

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: lhs " + shape_str(av) + " incompatible with rhs " +
                         shape_str(bv));
  }
  int ai = a.id, bi = b.id;
  return a.tape->emit(av * bv, [ai, bi](Tape& t, int self) {
    const Matrix& up = t.grad(self);
    t.grad_ref(ai) += up * t.value(bi).transpose();
    t.grad_ref(bi) += t.value(ai).transpose() * up;
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  int ai = a.id, bi = b.id;
  return a.tape->emit(a.value() + b.value(), [ai, bi](Tape& t, int self) {
    t.grad_ref(ai) += t.grad(self);
    t.grad_ref(bi) += t.grad(self);
  });
}

Var add_row_broadcast(Var a, Var bias) {
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row_broadcast: bias " + shape_str(bv) +
                         " does not broadcast over " + shape_str(av));
  }
  int ai = a.id, bi = bias.id;
  Matrix out = av.rowwise() + bv.row(0);
  return a.tape->emit(std::move(out), [ai, bi](Tape& t, int self) {
    const Matrix& up = t.grad(self);
    t.grad_ref(ai) += up;
    t.grad_ref(bi) += up.colwise().sum();
  });
}

Var scale(Var x, double c) {
  int xi = x.id;
  return x.tape->emit(x.value() * c, [xi, c](Tape& t, int self) {
    t.grad_ref(xi) += t.grad(self) * c;
  });
}

Var tanh(Var x) {
  int xi = x.id;
  Matrix out = x.value().array().tanh();
  return x.tape->emit(std::move(out), [xi](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad_ref(xi).array() += t.grad(self).array() * (1.0 - y.array().square());
  });
}

Var clamp(Var x, double lo, double hi) {
  if (lo > hi) throw ValidationError("clamp: lo > hi");
  int xi = x.id;
  Matrix out = x.value().array().max(lo).min(hi);
  return x.tape->emit(std::move(out), [xi, lo, hi](Tape& t, int self) {
    const Matrix& xv = t.value(xi);
    // Pass-through on the identity region only.
    Matrix mask = ((xv.array() >= lo) && (xv.array() <= hi)).cast<double>();
    t.grad_ref(xi).array() += t.grad(self).array() * mask.array();
  });
}

Var replicate_rows(Var row, int n) {
  const Matrix& rv = row.value();
  if (rv.rows() != 1) {
    throw DimensionError("replicate_rows: expected a 1xN row, got " + shape_str(rv));
  }
  int ri = row.id;
  Matrix out = rv.replicate(n, 1);
  return row.tape->emit(std::move(out), [ri](Tape& t, int self) {
    t.grad_ref(ri) += t.grad(self).colwise().sum();
  });
}

Var gather_rows(Var x, std::vector<int> idx) {
  const Matrix& xv = x.value();
  for (int i : idx) {
    if (i < 0 || i >= xv.rows()) {
      throw BoundsError("gather_rows: row index " + std::to_string(i) + " out of range [0," +
                        std::to_string(xv.rows()) + ")");
    }
  }
  int xi = x.id;
  Matrix out(static_cast<Eigen::Index>(idx.size()), xv.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = xv.row(idx[i]);
  return x.tape->emit(std::move(out), [xi, idx = std::move(idx)](Tape& t, int self) {
    const Matrix& up = t.grad(self);
    Matrix& gx = t.grad_ref(xi);
    for (size_t i = 0; i < idx.size(); ++i) {
      gx.row(idx[i]) += up.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var concat_cols(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: row counts differ, " + shape_str(av) + " vs " +
                         shape_str(bv));
  }
  int ai = a.id, bi = b.id;
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  Eigen::Index ac = av.cols(), bc = bv.cols();
  return a.tape->emit(std::move(out), [ai, bi, ac, bc](Tape& t, int self) {
    const Matrix& up = t.grad(self);
    t.grad_ref(ai) += up.leftCols(ac);
    t.grad_ref(bi) += up.rightCols(bc);
  });
}

Var slice_cols(Var x, int begin, int width) {
  const Matrix& xv = x.value();
  if (begin < 0 || width < 0 || begin + width > xv.cols()) {
    throw BoundsError("slice_cols: [" + std::to_string(begin) + "," +
                      std::to_string(begin + width) + ") out of range for " + shape_str(xv));
  }
  int xi = x.id;
  Matrix out = xv.middleCols(begin, width);
  return x.tape->emit(std::move(out), [xi, begin, width](Tape& t, int self) {
    t.grad_ref(xi).middleCols(begin, width) += t.grad(self);
  });
}

Var row_bilinear(Var phi, Var gflat, int r, int h) {
  const Matrix& pv = phi.value();
  const Matrix& gv = gflat.value();
  if (pv.cols() != r) {
    throw DimensionError("row_bilinear: phi " + shape_str(pv) + " does not have " +
                         std::to_string(r) + " columns");
  }
  if (gv.cols() != static_cast<Eigen::Index>(r) * h || gv.rows() != pv.rows()) {
    throw DimensionError("row_bilinear: gflat " + shape_str(gv) + " does not match B x (" +
                         std::to_string(r) + "*" + std::to_string(h) + ")");
  }
  int pi = phi.id, gi = gflat.id;
  using RowMajorMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Index B = pv.rows();
  Matrix out(B, h);
  for (Eigen::Index i = 0; i < B; ++i) {
    RowVector flat = gv.row(i);
    Eigen::Map<const RowMajorMat> G(flat.data(), r, h);
    out.row(i) = pv.row(i) * G;
  }
  return phi.tape->emit(std::move(out), [pi, gi, r, h](Tape& t, int self) {
    const Matrix& up = t.grad(self);
    const Matrix& pv = t.value(pi);
    const Matrix& gv = t.value(gi);
    Matrix& gp = t.grad_ref(pi);
    Matrix& gg = t.grad_ref(gi);
    for (Eigen::Index i = 0; i < up.rows(); ++i) {
      RowVector flat = gv.row(i);
      Eigen::Map<const RowMajorMat> G(flat.data(), r, h);
      gp.row(i) += up.row(i) * G.transpose();
      Matrix dG = pv.row(i).transpose() * up.row(i);  // r x h
      for (int j = 0; j < r; ++j) {
        gg.row(i).segment(static_cast<Eigen::Index>(j) * h, h) += dG.row(j);
      }
    }
  });
}

Var sum_all(Var x) {
  int xi = x.id;
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape->emit(std::move(out), [xi](Tape& t, int self) {
    t.grad_ref(xi).array() += t.grad(self)(0, 0);
  });
}

Var mean_all(Var x) {
  double n = static_cast<double>(x.value().size());
  return scale(sum_all(x), 1.0 / n);
}

Var sum_squares(Var x) {
  int xi = x.id;
  Matrix out(1, 1);
  out(0, 0) = x.value().array().square().sum();
  return x.tape->emit(std::move(out), [xi](Tape& t, int self) {
    t.grad_ref(xi) += 2.0 * t.grad(self)(0, 0) * t.value(xi);
  });
}

namespace {

// Row-wise log-sum-exp with the max subtracted.
double lse_row(const RowVector& row) {
  double m = row.maxCoeff();
  return m + std::log((row.array() - m).exp().sum());
}

}  // namespace

RowVector softmax_row(const RowVector& logits) {
  double m = logits.maxCoeff();
  RowVector e = (logits.array() - m).exp();
  return e / e.sum();
}

double log_softmax_at(const RowVector& logits, int index) {
  return logits(index) - lse_row(logits);
}

Var nll_categorical(Var logits, std::vector<int> targets) {
  const Matrix& lv = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != lv.rows()) {
    throw DimensionError("nll_categorical: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(lv.rows()) + " rows");
  }
  for (int a : targets) {
    if (a < 0 || a >= lv.cols()) {
      throw BoundsError("nll_categorical: action " + std::to_string(a) + " out of range [0," +
                        std::to_string(lv.cols()) + ")");
    }
  }
  int li = logits.id;
  double total = 0.0;
  for (Eigen::Index i = 0; i < lv.rows(); ++i) {
    total += lse_row(lv.row(i)) - lv(i, targets[static_cast<size_t>(i)]);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(lv.rows());
  return logits.tape->emit(std::move(out), [li, targets = std::move(targets)](Tape& t, int self) {
    const Matrix& lv = t.value(li);
    double coef = t.grad(self)(0, 0) / static_cast<double>(lv.rows());
    Matrix& gl = t.grad_ref(li);
    for (Eigen::Index i = 0; i < lv.rows(); ++i) {
      RowVector p = softmax_row(lv.row(i));
      p(targets[static_cast<size_t>(i)]) -= 1.0;
      gl.row(i) += coef * p;
    }
  });
}

Var xent_rows(Var logits, Matrix target_probs) {
  const Matrix& lv = logits.value();
  require_same_shape("xent_rows", lv, target_probs);
  int li = logits.id;
  double total = 0.0;
  for (Eigen::Index i = 0; i < lv.rows(); ++i) {
    total += lse_row(lv.row(i)) - lv.row(i).dot(target_probs.row(i));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(lv.rows());
  return logits.tape->emit(
      std::move(out), [li, tp = std::move(target_probs)](Tape& t, int self) {
        const Matrix& lv = t.value(li);
        double coef = t.grad(self)(0, 0) / static_cast<double>(lv.rows());
        Matrix& gl = t.grad_ref(li);
        for (Eigen::Index i = 0; i < lv.rows(); ++i) {
          RowVector p = softmax_row(lv.row(i));
          gl.row(i) += coef * (p - RowVector(tp.row(i)));
        }
      });
}

Var gaussian_nll(Var mean, Var log_std, Matrix actions) {
  const Matrix& mv = mean.value();
  const Matrix& sv = log_std.value();
  require_same_shape("gaussian_nll(mean,log_std)", mv, sv);
  require_same_shape("gaussian_nll(mean,actions)", mv, actions);
  int mi = mean.id, si = log_std.id;
  const double half_log_2pi = 0.91893853320467274178;
  Matrix z = (actions - mv).array() * (-sv).array().exp();
  double total = sv.sum() + half_log_2pi * static_cast<double>(sv.size()) +
                 0.5 * z.array().square().sum();
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(mv.rows());
  return mean.tape->emit(std::move(out), [mi, si, a = std::move(actions)](Tape& t, int self) {
    const Matrix& mv = t.value(mi);
    const Matrix& sv = t.value(si);
    double coef = t.grad(self)(0, 0) / static_cast<double>(mv.rows());
    Eigen::ArrayXXd inv_std = (-sv).array().exp();
    Eigen::ArrayXXd z = (a - mv).array() * inv_std;
    t.grad_ref(mi).array() += coef * (-z * inv_std);
    t.grad_ref(si).array() += coef * (1.0 - z.square());
  });
}

}  // namespace cmail::la
