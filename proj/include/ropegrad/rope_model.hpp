// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "ropegrad/types.hpp"

namespace ropegrad {

enum class WeightMode { kIdentity, kRotary, kGeneral };

/// One nonzero of a sparse d x d weight matrix.
struct WeightEntry {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
};

// The family { W_t : t in [-(n-1), n-1] } of d x d position weights.
//
// Three families are supported:
//  - identity: W_t = I_d for every lag
//  - rotary:   W_t is block-diagonal with d/2 rotation blocks R(t * theta_b),
//              theta_b = base^(-2b/d)
//  - general:  an explicit sparse table per lag, support inside a fixed set S
class RopeWeights {
 public:
  static RopeWeights identity(Index n, Index d);
  static RopeWeights rotary(Index n, Index d, double base);
  static RopeWeights general(Index n, Index d,
                             std::vector<std::pair<Index, std::vector<WeightEntry>>> table);

  WeightMode mode() const { return mode_; }
  Index n() const { return n_; }
  Index d() const { return d_; }
  double base() const { return base_; }

  /// Dense W_t (oracle/test use; lags outside range are invalid).
  Mat matrix(Index t) const;

  /// out = W_t * v.
  void apply(Index t, const Vec& v, Vec& out) const;

  /// Visits every stored nonzero of W_t.
  void for_each_entry(Index t,
                      const std::function<void(Index, Index, double)>& fn) const;

  Index nnz(Index t) const;

  /// c_S = max_t nnz(W_t) / d; bounds |logit| <= c_S * B^2.
  double support_factor() const;

  /// General mode: the table rows as loaded (lag, entries).
  const std::vector<std::pair<Index, std::vector<WeightEntry>>>& table() const {
    return table_;
  }

 private:
  RopeWeights() = default;
  void check_lag(Index t) const;

  WeightMode mode_ = WeightMode::kIdentity;
  Index n_ = 0;
  Index d_ = 0;
  double base_ = 0.0;
  std::vector<double> thetas_;  // rotary: d/2 block angles
  std::vector<std::pair<Index, std::vector<WeightEntry>>> table_;  // general
  std::vector<std::vector<WeightEntry>> by_lag_;  // general, indexed t + n - 1
};

/// Standard rotary family with angles theta_b = base^(-2b/d).
RopeWeights make_rotary_weights(Index n, Index d, double base);

// One gradient problem instance. All invariants are enforced by validate():
// shapes, finiteness, |A1 X1|_inf <= B (and mates), and the exp-overflow
// guard c_S * B^2 <= 40.
struct Instance {
  Index n = 0;
  Index d = 0;
  double B = 0.0;
  Mat A1, A2, A3;  // n x d
  Mat X1, X2, Y;   // d x d
  Mat E;           // n x d
  RopeWeights weights = RopeWeights::identity(1, 1);

  void validate() const;

  /// Upper bound on |logit| over all index pairs.
  double logit_bound() const { return weights.support_factor() * B * B; }
};

struct ForwardState {
  Mat A;     // n x n attention numerator, entries exp(logit)
  Vec Dvec;  // row sums of A
  Mat S;     // row-stochastic normalized softmax
  Mat Vy;    // A3 * Y
  Mat C;     // residual S * Vy - E
  double loss = 0.0;
};

/// The attention exponent for pair (j0, i): Q_{j0} W_{j0-i} K_i^T / d.
double logit(const Instance& inst, Index j0, Index i);

ForwardState forward(const Instance& inst);

/// diag(row sums)^{-1} * m.
Mat normalize_rows(const Mat& m);

// Row i is kron(kron(A1_{j0,*}, A2_{i,*}), vec(W_{j0-i})^T) / d, so that
// exp(block * vec(X1 kron X2)) reproduces row j0 of the attention matrix.
// Guarded to n^2 d^4 <= 2^26 entries; oracle/test use only.
Mat build_tilde_A_block(const Instance& inst, Index j0);

inline constexpr Index kTildeAGuard = Index(1) << 26;
inline constexpr double kLogitOverflowCap = 40.0;

}  // namespace ropegrad
