#include "cmail/tensor_train.hpp"

#include <cmath>
#include <string>

#include "cmail/nn.hpp"
#include "cmail/rng.hpp"

namespace cmail::tt {

using la::Matrix;
using la::RowVector;
using la::Vector;

TensorTrain::TensorTrain(std::vector<TtCore> cores) : cores_(std::move(cores)) {
  if (cores_.empty()) throw ValidationError("TensorTrain: needs at least one core");
  for (size_t i = 0; i < cores_.size(); ++i) {
    const TtCore& c = cores_[i];
    if (c.slices.empty()) throw ValidationError("TensorTrain: core has empty mode");
    for (const Matrix& s : c.slices) {
      if (s.rows() != c.r_prev() || s.cols() != c.r_next()) {
        throw ValidationError("TensorTrain: ragged slices within core " + std::to_string(i));
      }
    }
    if (c.r_prev() < 1 || c.r_next() < 1) {
      throw ValidationError("TensorTrain: ranks must be >= 1");
    }
  }
  if (cores_.front().r_prev() != 1) throw ValidationError("TensorTrain: r_0 must be 1");
  for (size_t i = 0; i + 1 < cores_.size(); ++i) {
    if (cores_[i].r_next() != cores_[i + 1].r_prev()) {
      throw ValidationError("TensorTrain: rank chain broken between cores " + std::to_string(i) +
                            " and " + std::to_string(i + 1));
    }
  }
}

std::vector<int> TensorTrain::modes() const {
  std::vector<int> out;
  for (const TtCore& c : cores_) out.push_back(c.mode());
  return out;
}

std::vector<int> TensorTrain::ranks() const {
  std::vector<int> out;
  out.push_back(cores_.front().r_prev());
  for (const TtCore& c : cores_) out.push_back(c.r_next());
  return out;
}

Vector tt_eval(const TensorTrain& train, const std::vector<int>& indices) {
  const auto& cores = train.cores();
  if (indices.size() != cores.size()) {
    throw DimensionError("tt_eval: got " + std::to_string(indices.size()) + " indices for " +
                         std::to_string(cores.size()) + " cores");
  }
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= cores[i].mode()) {
      throw BoundsError("tt_eval: index " + std::to_string(indices[i]) +
                        " out of mode range [0," + std::to_string(cores[i].mode()) +
                        ") in dimension " + std::to_string(i));
    }
  }
  Matrix acc = cores[0].slices[static_cast<size_t>(indices[0])];
  for (size_t i = 1; i < cores.size(); ++i) {
    acc = acc * cores[i].slices[static_cast<size_t>(indices[i])];
  }
  return acc.row(0).transpose();
}

void PolicyTensor::validate() const {
  if (static_cast<int>(probs.size()) != n_partners) {
    throw ValidationError("PolicyTensor: partner count mismatch");
  }
  for (int y = 0; y < n_partners; ++y) {
    const Matrix& m = probs[static_cast<size_t>(y)];
    if (m.rows() != n_states || m.cols() != n_actions) {
      throw ValidationError("PolicyTensor: partner " + std::to_string(y) + " has wrong shape");
    }
    if ((m.array() < 0.0).any()) {
      throw ValidationError("PolicyTensor: negative probability for partner " +
                            std::to_string(y));
    }
    for (int s = 0; s < n_states; ++s) {
      double sum = m.row(s).sum();
      if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("PolicyTensor: row (state " + std::to_string(s) + ", partner " +
                              std::to_string(y) + ") sums to " + std::to_string(sum));
      }
    }
  }
}

namespace {

// The fit works on a flat (partner table, state table) parameterization of
// the two trainable cores.
struct TwoCoreParams {
  la::Parameter partner;  // n_partners x rank
  la::Parameter state;    // n_states x (rank * n_actions)
};

TensorTrain to_train(const TwoCoreParams& p, int rank, int n_actions) {
  TtCore partner_core;
  for (Eigen::Index y = 0; y < p.partner.value.rows(); ++y) {
    partner_core.slices.push_back(p.partner.value.row(y));
  }
  TtCore state_core;
  for (Eigen::Index s = 0; s < p.state.value.rows(); ++s) {
    Matrix slice(rank, n_actions);
    for (int j = 0; j < rank; ++j) {
      slice.row(j) =
          p.state.value.row(s).segment(static_cast<Eigen::Index>(j) * n_actions, n_actions);
    }
    state_core.slices.push_back(std::move(slice));
  }
  return TensorTrain({std::move(partner_core), std::move(state_core)});
}

TwoCoreParams from_train(const TensorTrain& train) {
  const TtCore& pc = train.cores()[0];
  const TtCore& sc = train.cores()[1];
  int rank = pc.r_next();
  int n_actions = sc.r_next();
  Matrix partner(pc.mode(), rank);
  for (int y = 0; y < pc.mode(); ++y) partner.row(y) = pc.slices[static_cast<size_t>(y)].row(0);
  Matrix state(sc.mode(), static_cast<Eigen::Index>(rank) * n_actions);
  for (int s = 0; s < sc.mode(); ++s) {
    for (int j = 0; j < rank; ++j) {
      state.row(s).segment(static_cast<Eigen::Index>(j) * n_actions, n_actions) =
          sc.slices[static_cast<size_t>(s)].row(j);
    }
  }
  return TwoCoreParams{la::Parameter(std::move(partner)), la::Parameter(std::move(state))};
}

FitResult fit_impl(const PolicyTensor& target, TwoCoreParams params, int rank,
                   const FitOptions& opts) {
  int m = target.n_partners, S = target.n_states, A = target.n_actions;
  Eigen::Index B = static_cast<Eigen::Index>(m) * S;
  std::vector<int> ys(static_cast<size_t>(B)), ss(static_cast<size_t>(B));
  Matrix target_rows(B, A);
  Eigen::Index row = 0;
  for (int y = 0; y < m; ++y) {
    for (int s = 0; s < S; ++s, ++row) {
      ys[static_cast<size_t>(row)] = y;
      ss[static_cast<size_t>(row)] = s;
      target_rows.row(row) = target.probs[static_cast<size_t>(y)].row(s);
    }
  }

  std::vector<la::Parameter*> ps = {&params.partner, &params.state};
  la::Adam opt(la::AdamConfig{opts.lr, 0.9, 0.999, 1e-8});
  for (int it = 0; it < opts.iters; ++it) {
    la::zero_grads(ps);
    la::Tape tape;
    la::Var phi = la::gather_rows(tape.leaf(params.partner), ys);
    la::Var g = la::gather_rows(tape.leaf(params.state), ss);
    la::Var logits = la::row_bilinear(phi, g, rank, A);
    la::Var loss = la::xent_rows(logits, target_rows);
    tape.backward(loss);
    opt.step(ps);
  }

  TensorTrain fitted = to_train(params, rank, A);
  return FitResult{fitted, fit_log_loss(target, fitted)};
}

}  // namespace

FitResult tt_fit(const PolicyTensor& target, int rank, uint64_t seed, FitOptions opts) {
  if (rank < 1) throw ValidationError("tt_fit: rank must be >= 1");
  target.validate();
  Rng rng(seed);
  Matrix partner(target.n_partners, rank);
  for (Eigen::Index i = 0; i < partner.rows(); ++i) {
    for (Eigen::Index j = 0; j < partner.cols(); ++j) partner(i, j) = rng.normal(0.0, 0.3);
  }
  Matrix state(target.n_states, static_cast<Eigen::Index>(rank) * target.n_actions);
  for (Eigen::Index i = 0; i < state.rows(); ++i) {
    for (Eigen::Index j = 0; j < state.cols(); ++j) state(i, j) = rng.normal(0.0, 0.3);
  }
  TwoCoreParams params{la::Parameter(std::move(partner)), la::Parameter(std::move(state))};
  return fit_impl(target, std::move(params), rank, opts);
}

FitResult tt_fit_warm(const PolicyTensor& target, const TensorTrain& init, FitOptions opts) {
  if (init.order() != 2) throw ValidationError("tt_fit_warm: expects a 2-core train");
  target.validate();
  return fit_impl(target, from_train(init), init.ranks()[1], opts);
}

TensorTrain zero_pad(const TensorTrain& train, int new_rank) {
  if (train.order() != 2) throw ValidationError("zero_pad: expects a 2-core train");
  int old_rank = train.ranks()[1];
  if (new_rank < old_rank) throw ValidationError("zero_pad: new rank smaller than current");
  TtCore partner;
  for (const Matrix& s : train.cores()[0].slices) {
    Matrix padded = Matrix::Zero(1, new_rank);
    padded.leftCols(old_rank) = s;
    partner.slices.push_back(std::move(padded));
  }
  TtCore state;
  for (const Matrix& s : train.cores()[1].slices) {
    Matrix padded = Matrix::Zero(new_rank, s.cols());
    padded.topRows(old_rank) = s;
    state.slices.push_back(std::move(padded));
  }
  return TensorTrain({std::move(partner), std::move(state)});
}

double fit_log_loss(const PolicyTensor& target, const TensorTrain& train) {
  double total = 0.0;
  for (int y = 0; y < target.n_partners; ++y) {
    for (int s = 0; s < target.n_states; ++s) {
      Vector logits = tt_eval(train, {y, s});
      RowVector lr = logits.transpose();
      double m = lr.maxCoeff();
      double lse = m + std::log((lr.array() - m).exp().sum());
      total += lse - lr.dot(target.probs[static_cast<size_t>(y)].row(s));
    }
  }
  return total / (static_cast<double>(target.n_partners) * target.n_states);
}

std::vector<std::pair<int, double>> rank_sweep(const PolicyTensor& target,
                                               const std::vector<int>& ranks, uint64_t seed,
                                               FitOptions opts) {
  if (ranks.empty()) throw ValidationError("rank_sweep: rank list is empty");
  std::vector<std::pair<int, double>> out;
  for (int r : ranks) {
    uint64_t sub = mix_seed(seed, "tt_fit/rank=" + std::to_string(r));
    out.emplace_back(r, tt_fit(target, r, sub, opts).log_loss);
  }
  return out;
}

}  // namespace cmail::tt
