// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>

#include "ropegrad/rope_model.hpp"
#include "ropegrad/types.hpp"

namespace ropegrad {

struct GradIntermediates {
  Mat Beta;   // n x n, row j0 = beta(x)_{j0}^T
  Mat Gamma;  // n x n, row j0 = gamma(x)_{j0}^T
  Vec g;      // d^4 gradient w.r.t. vec(X1 kron X2)
};

/// Beta = C * Vy^T; row j0 equals (A3 Y C_{j0,*}^T)^T.
Mat compute_beta(const ForwardState& state);

/// Row j0 = S_{j0} o Beta_{j0} - S_{j0} <S_{j0}, Beta_{j0}> (rank-1 + diagonal).
Mat compute_gamma(const ForwardState& state, const Mat& beta);

// Contracts gamma against the structured attention Jacobian by lag:
//   g = sum_t sum_{a,c} T_t(a, c) * (e_a kron e_c kron vec(W_t)) / d,
//   T_t = sum_i Gamma(i+t, i) * A1_{i+t,*}^T A2_{i,*}.
// O(n^2 d^2 + n d^3); never materializes the n^2 x d^4 matrix.
Vec assemble_gradient(const Instance& inst, const Mat& gamma);

GradIntermediates exact_gradient(const Instance& inst);

// Entrywise derivative oracle: literal evaluation of
//   sum_{j0, i0} c_{j0,i0} < -s_{j0} <(A~_{j0})_{*,i}, s_{j0}> + s_{j0} o (A~_{j0})_{*,i}, A3 Y_{*,i0} >
// through explicit A~ blocks. Same materialization guard as build_tilde_A_block.
double gradient_entry_oracle(const Instance& inst, Index i);
Vec gradient_oracle_all(const Instance& inst);

// Chain rule back to the factor gradients:
//   G1(a,b) = sum_{c,e} G(a d + c, b d + e) X2(c,e), and symmetrically for G2,
// where G is g reshaped d^2 x d^2.
std::pair<Mat, Mat> chain_to_factors(const Vec& g, const Mat& x1, const Mat& x2);

// The individual derivative steps, split out so each can be checked against
// finite differences on its own.
namespace grad_parts {

/// d(A~_{j0} x)/dx_i: column i of the block.
Vec part1_dax(const Mat& block, Index i);

/// du_{j0}/dx_i = u o col.
Vec part2_du(const Vec& u, const Vec& col);

/// dalpha_{j0}/dx_i = <col, u>.
double part3_dalpha(const Vec& col, const Vec& u);

/// ds_{j0}/dx_i = -s <col, s> + s o col.
Vec part4_ds(const Vec& s, const Vec& col);

/// d<s_{j0}, vy_{i0}>/dx_i.
double part5_dinner(const Vec& s, const Vec& col, const Vec& vy_col);

/// dL_{j0,i0}/dx_i = c * part5.
double part7_dloss(double c, const Vec& s, const Vec& col, const Vec& vy_col);

}  // namespace grad_parts

}  // namespace ropegrad
