#include "cmail/nn.hpp"

#include <cmath>
#include <cstring>

namespace cmail::la {

Mlp::Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng)
    : in_dim_(in_dim), out_dim_(out_dim) {
  if (in_dim <= 0 || out_dim <= 0) {
    throw ValidationError("Mlp: dimensions must be positive");
  }
  std::vector<int> dims;
  dims.push_back(in_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out_dim);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    int fan_in = dims[l], fan_out = dims[l + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        w(i, j) = rng.uniform(-bound, bound);
      }
    }
    layers_.push_back(DenseLayer{Parameter(std::move(w)), Parameter(Matrix::Zero(1, fan_out))});
  }
}

void Mlp::check_input(const Matrix& x) const {
  if (x.cols() != in_dim_) {
    throw DimensionError("Mlp::forward: input has " + std::to_string(x.cols()) +
                         " columns, expected " + std::to_string(in_dim_));
  }
}

Var Mlp::forward(Tape& tape, Var x) {
  check_input(x.value());
  Var h = x;
  for (size_t l = 0; l < layers_.size(); ++l) {
    h = add_row_broadcast(matmul(h, tape.leaf(layers_[l].weight)), tape.leaf(layers_[l].bias));
    if (l + 1 < layers_.size()) h = la::tanh(h);
  }
  return h;
}

Matrix Mlp::forward_value(const Matrix& x) const {
  check_input(x);
  Matrix h = x;
  for (size_t l = 0; l < layers_.size(); ++l) {
    h = (h * layers_[l].weight.value).rowwise() + layers_[l].bias.value.row(0);
    if (l + 1 < layers_.size()) h = h.array().tanh();
  }
  if (!h.allFinite()) throw NumericError("Mlp::forward_value: non-finite output");
  return h;
}

std::vector<Parameter*> Mlp::params() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> Mlp::params() const {
  std::vector<const Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

Mlp Mlp::clone() const {
  Mlp copy;
  copy.in_dim_ = in_dim_;
  copy.out_dim_ = out_dim_;
  for (const auto& l : layers_) {
    copy.layers_.push_back(DenseLayer{Parameter(l.weight.value), Parameter(l.bias.value)});
  }
  return copy;
}

void Adam::step(const std::vector<Parameter*>& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Parameter* p : params) {
    auto it = moments_.find(p->id);
    if (it == moments_.end()) {
      it = moments_
               .emplace(p->id, std::make_pair(Matrix::Zero(p->value.rows(), p->value.cols()),
                                              Matrix::Zero(p->value.rows(), p->value.cols())))
               .first;
    }
    Matrix& m = it->second.first;
    Matrix& v = it->second.second;
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw DimensionError("Adam::step: moment shape does not match parameter shape");
    }
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * p->grad;
    v = cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * p->grad.array().square();
    Matrix update =
        (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps) * cfg_.lr;
    p->value -= update;
    if (!p->value.allFinite()) {
      throw NumericError("Adam::step: parameter became non-finite");
    }
  }
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (Parameter* p : params) sq += p->grad.squaredNorm();
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (Parameter* p : params) p->grad *= s;
  }
  return norm;
}

namespace {

void append_bytes(std::string& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      char buf[sizeof(double)];
      std::memcpy(buf, &v, sizeof(double));
      out.append(buf, sizeof(double));
    }
  }
}

}  // namespace

std::string param_bytes(const std::vector<const Parameter*>& params) {
  std::string out;
  for (const Parameter* p : params) append_bytes(out, p->value);
  return out;
}

std::string param_bytes(const std::vector<Parameter*>& params) {
  std::vector<const Parameter*> cp(params.begin(), params.end());
  return param_bytes(cp);
}

}  // namespace cmail::la
