// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "ropegrad/rope_model.hpp"

namespace ropegrad {

// Counter-based generator (splitmix64 stream): the i-th draw is a pure
// function of (seed, i), so instances are reproducible bit for bit.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform on [0, 1).
  double unit();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller.
  double gaussian();

 private:
  std::uint64_t state_;
};

struct GenOptions {
  double sigma = 0.1;          // Gaussian perturbation of the exact output in E
  double rotary_base = 10000.0;
};

// Deterministic random instance with the entry bounds guaranteed by
// construction: entries are i.i.d. uniform on [-beta, beta] with
// beta = sqrt(B/d), then rescaled if a product bound is ever violated.
// E defaults to the exact attention output plus sigma * N(0,1) noise.
Instance gen_instance(std::uint64_t seed, Index n, Index d, double B,
                      WeightMode mode, const GenOptions& opts = {});

/// Loss evaluated with a free d^2 x d^2 middle matrix (not constrained to the
/// Kronecker manifold); the differentiation target of the gradient vector.
double loss_free(const Instance& inst, const Mat& x_free);

// Central differences of loss_free w.r.t. each of the d^4 coordinates of
// vec(X1 kron X2). Costs 2 d^4 forward passes; guarded to d^4 <= 4096.
Vec finite_diff_gradient(const Instance& inst, double h);

inline constexpr Index kFiniteDiffGuard = 4096;

}  // namespace ropegrad
