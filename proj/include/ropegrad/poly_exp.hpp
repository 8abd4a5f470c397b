// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ropegrad/types.hpp"

namespace ropegrad {

// Polynomial approximation of exp on a bounded interval, stored in the
// monomial basis with a dense-grid certified uniform error.
struct PolyApprox {
  int degree = 0;
  Vec coeffs;  // monomial basis, length degree + 1
  double lo = 0.0;
  double hi = 0.0;
  double certified_err = 0.0;
  int grid_points = 0;  // resolution the certificate was computed on
};

// Degree bound g = ceil(max{B, ln(1/eps) / max(ln(max(ln(1/eps)/B, e)), 1)}) + 2
// with B clamped up to 1. eps must lie in (0, 0.1).
int select_degree(double b_int, double eps);

/// Chebyshev interpolant of exp on [lo, hi] at a fixed degree; certifies but
/// does not enforce an error target.
PolyApprox interpolate_exp(double lo, double hi, int degree,
                           int grid_points = 10001);

// Smallest-degree Chebyshev interpolant whose certified grid error is <= eps.
// The search is capped at select_degree(hi - lo, eps) + 5 (and 64 overall);
// failure to certify within the cap raises ApproxError with the best error
// achieved.
PolyApprox build_poly(double lo, double hi, double eps);

/// Horner evaluation; sets *outside when x falls off the build interval.
double eval_poly(const PolyApprox& p, double x, bool* outside = nullptr);

inline constexpr int kMaxPolyDegree = 64;

}  // namespace ropegrad
