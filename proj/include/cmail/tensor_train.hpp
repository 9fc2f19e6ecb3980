#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cmail/autodiff.hpp"

namespace cmail::tt {

// One 3-dimensional core of shape r_prev x mode x r_next, stored as one
// r_prev x r_next matrix slice per mode index.
struct TtCore {
  std::vector<la::Matrix> slices;

  int r_prev() const { return static_cast<int>(slices.at(0).rows()); }
  int mode() const { return static_cast<int>(slices.size()); }
  int r_next() const { return static_cast<int>(slices.at(0).cols()); }
};

// Chain of cores with boundary ranks r_0 = 1 and r_n = output dimension.
class TensorTrain {
 public:
  explicit TensorTrain(std::vector<TtCore> cores);

  const std::vector<TtCore>& cores() const { return cores_; }
  std::vector<TtCore>& cores() { return cores_; }
  std::vector<int> modes() const;
  std::vector<int> ranks() const;  // [r_0 .. r_n]
  int output_dim() const { return cores_.back().r_next(); }
  int order() const { return static_cast<int>(cores_.size()); }

 private:
  std::vector<TtCore> cores_;
};

// Indexed evaluation: the product of one matrix slice per core, flattened to
// a vector of length r_n.
la::Vector tt_eval(const TensorTrain& train, const std::vector<int>& indices);

// Dense per-(state,partner) action distributions of a tabular policy
// population, dims [n_states, n_actions, n_partners].
struct PolicyTensor {
  int n_states = 0;
  int n_actions = 0;
  int n_partners = 0;
  std::vector<la::Matrix> probs;  // per partner: n_states x n_actions

  void validate() const;  // nonnegative rows summing to 1 within 1e-9
};

struct FitResult {
  TensorTrain train;
  double log_loss = 0.0;
};

struct FitOptions {
  int iters = 3000;
  double lr = 1e-2;
};

// Fits a 2-core train (partner core of mode n_partners, state core of mode
// n_states, output dim n_actions) by full-batch Adam on the mean
// cross-entropy between softmax(tt_eval) and the target distributions.
FitResult tt_fit(const PolicyTensor& target, int rank, uint64_t seed, FitOptions opts = {});

// Same objective, warm-started from an existing 2-core train.
FitResult tt_fit_warm(const PolicyTensor& target, const TensorTrain& init, FitOptions opts = {});

// Pads a 2-core train to a larger inner rank with zeros; evaluation is
// unchanged.
TensorTrain zero_pad(const TensorTrain& train, int new_rank);

// Mean cross-entropy of the target under softmax(tt_eval), over all cells.
double fit_log_loss(const PolicyTensor& target, const TensorTrain& train);

// tt_fit per rank with a fresh sub-seed each; results in input order.
std::vector<std::pair<int, double>> rank_sweep(const PolicyTensor& target,
                                               const std::vector<int>& ranks, uint64_t seed,
                                               FitOptions opts = {});

}  // namespace cmail::tt
