// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/poly_exp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ropegrad/errors.hpp"

namespace ropegrad {

int select_degree(double b_int, double eps) {
  if (!(b_int > 0.0)) throw ConfigError("select_degree: interval length must be positive");
  if (!(eps > 0.0 && eps < 0.1))
    throw ConfigError("select_degree: eps must lie in (0, 0.1), got " +
                      std::to_string(eps));
  const double b = std::max(b_int, 1.0);
  const double log_inv_eps = std::log(1.0 / eps);
  const double denom =
      std::max(std::log(std::max(log_inv_eps / b, std::numbers::e)), 1.0);
  const double g = std::max(b, log_inv_eps / denom);
  return static_cast<int>(std::ceil(g)) + 2;
}

PolyApprox interpolate_exp(double lo, double hi, int degree, int grid_points) {
  if (!(hi > lo)) throw ConfigError("interpolate_exp: need hi > lo");
  if (degree < 0 || degree > kMaxPolyDegree)
    throw ConfigError("interpolate_exp: degree out of range");
  if (grid_points < 2) throw ConfigError("interpolate_exp: grid too coarse");

  const int m = degree + 1;
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);

  // Chebyshev coefficients of the interpolant through the m Chebyshev nodes.
  Vec fvals(m);
  for (int j = 0; j < m; ++j) {
    const double theta = std::numbers::pi * (j + 0.5) / m;
    fvals(j) = std::exp(mid + half * std::cos(theta));
  }
  Vec cheb = Vec::Zero(m);
  for (int k = 0; k < m; ++k) {
    double acc = 0.0;
    for (int j = 0; j < m; ++j)
      acc += fvals(j) * std::cos(k * std::numbers::pi * (j + 0.5) / m);
    cheb(k) = (k == 0 ? 1.0 : 2.0) * acc / m;
  }

  // Chebyshev basis -> monomials in t via T_{k+1} = 2 t T_k - T_{k-1}.
  Vec mono = Vec::Zero(m);
  Vec t_prev = Vec::Zero(m), t_cur = Vec::Zero(m), t_next = Vec::Zero(m);
  t_prev(0) = 1.0;
  mono += cheb(0) * t_prev;
  if (degree >= 1) {
    t_cur(1) = 1.0;
    mono += cheb(1) * t_cur;
    for (int k = 2; k <= degree; ++k) {
      t_next.setZero();
      t_next.segment(1, m - 1) = 2.0 * t_cur.segment(0, m - 1);
      t_next -= t_prev;
      mono += cheb(k) * t_next;
      t_prev = t_cur;
      t_cur = t_next;
    }
  }

  // Substitute t = (x - mid) / half: scale, then Taylor-shift by -mid.
  for (int k = 0; k <= degree; ++k) mono(k) /= std::pow(half, k);
  for (int i = 0; i < degree; ++i)
    for (int j = degree - 1; j >= i; --j) mono(j) += (-mid) * mono(j + 1);

  PolyApprox p;
  p.degree = degree;
  p.coeffs = mono;
  p.lo = lo;
  p.hi = hi;
  p.grid_points = grid_points;
  double worst = 0.0;
  for (int i = 0; i < grid_points; ++i) {
    const double x = lo + (hi - lo) * i / (grid_points - 1);
    worst = std::max(worst, std::abs(eval_poly(p, x) - std::exp(x)));
  }
  p.certified_err = worst;
  return p;
}

PolyApprox build_poly(double lo, double hi, double eps) {
  if (!(hi > lo)) throw ConfigError("build_poly: need hi > lo");
  if (hi - lo > 200.0)
    throw ConfigError("build_poly: interval length " + std::to_string(hi - lo) +
                      " exceeds the overflow guard of 200");
  const int cap =
      std::min(select_degree(std::max(hi - lo, 1.0), eps) + 5, kMaxPolyDegree);
  double best = std::numeric_limits<double>::infinity();
  for (int deg = 0; deg <= cap; ++deg) {
    PolyApprox p = interpolate_exp(lo, hi, deg);
    if (p.certified_err <= eps) return p;
    best = std::min(best, p.certified_err);
  }
  throw ApproxError("build_poly: could not certify error <= " +
                        std::to_string(eps) + " up to degree " +
                        std::to_string(cap),
                    best);
}

double eval_poly(const PolyApprox& p, double x, bool* outside) {
  if (outside) *outside = (x < p.lo || x > p.hi);
  double acc = 0.0;
  for (Index k = p.coeffs.size() - 1; k >= 0; --k) acc = acc * x + p.coeffs(k);
  return acc;
}

}  // namespace ropegrad
