#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cmail/autodiff.hpp"
#include "cmail/rng.hpp"

namespace cmail::la {

struct DenseLayer {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

// Fully-connected net, tanh on hidden layers, identity on the output layer.
// Weights are Glorot-uniform, biases zero.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng);

  // Builds the forward graph on the tape; x is B x in_dim.
  Var forward(Tape& tape, Var x);
  // Tape-free forward for sampling/eval paths; bit-identical to forward().
  Matrix forward_value(const Matrix& x) const;

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  std::vector<Parameter*> params();
  std::vector<const Parameter*> params() const;
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Mlp clone() const;

 private:
  void check_input(const Matrix& x) const;

  std::vector<DenseLayer> layers_;
  int in_dim_ = 0;
  int out_dim_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by Parameter id; the
// step count is global and increments once per step() call.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Parameter*>& params);

  long long step_count() const { return t_; }
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  long long t_ = 0;
  std::unordered_map<int, std::pair<Matrix, Matrix>> moments_;
};

// Scales gradients so their global L2 norm is at most max_norm; returns the
// pre-clip norm.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

// Row-major little-endian byte image of parameter values, in list order.
// Used for checkpoints and for before/after identity checks.
std::string param_bytes(const std::vector<const Parameter*>& params);
std::string param_bytes(const std::vector<Parameter*>& params);

}  // namespace cmail::la
