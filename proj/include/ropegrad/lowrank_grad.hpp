// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0
//
// Almost-linear-time gradient path: trig features + polynomial lifting give a
// low-rank softmax factorization; beta/gamma compose in factored form; the
// final d^4 contraction groups pairs by lag and runs k d^2 FFT
// cross-correlations instead of touching any n x n matrix.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "ropegrad/poly_exp.hpp"
#include "ropegrad/rope_model.hpp"

namespace ropegrad {

inline constexpr Index kDefaultKCap = 4096;

enum class FactorTarget { kS, kBeta, kGamma1, kGamma2, kGamma };

/// U V^T approximates the tagged n x n quantity entrywise.
struct LowRankFactors {
  Mat U;
  Mat V;
  FactorTarget target = FactorTarget::kS;
  double eps_tag = 0.0;

  Index rank() const { return U.cols(); }
  Mat dense() const { return U * V.transpose(); }
};

// Separable features with <Phi_{j0,*}, Psi_{i,*}> == logit(j0, i) + shift.
// Rotary: 4 features per 2x2 block (query coordinates times cos/sin of the
// absolute position) plus one shift carrier, width 2d + 1. Identity: the
// plain query/key rows scaled by 1/d plus the carrier, width d + 1.
struct TrigFeatures {
  Mat Phi;
  Mat Psi;
  double shift = 0.0;
};

TrigFeatures trig_features(const Instance& inst, double shift);

// Monomial lifting of P over the features followed by row normalization, so
// that U V^T approximates the normalized softmax S. The lift enumerates the
// C(f + g, g) multisets of feature indices once and shares them between U
// and V, splitting coefficient and multinomial weights as square roots.
// poly must be built on [0, 2 * shift].
LowRankFactors lift_and_factor_A(const TrigFeatures& feat, const PolyApprox& poly,
                                 double eps_tag, Index k_cap = kDefaultKCap);

/// U1 (V1^T Vy) - E: the residual through the factored softmax, O(n k d).
Mat approx_c(const LowRankFactors& s_factors, const Mat& vy, const Mat& e);

/// Factors of Beta ~= (U1 V1^T Vy - E) Vy^T; never materializes n x n.
LowRankFactors approx_beta_factors(const LowRankFactors& s_factors,
                                   const Mat& vy, const Mat& e);

/// Row-wise Kronecker factors of Gamma1 = S o Beta (exact given the inputs).
LowRankFactors gamma1_factors(const LowRankFactors& s_factors,
                              const LowRankFactors& beta_factors,
                              Index k_cap = kDefaultKCap);

// Factors of Gamma2 (row j0 = <s_{j0}, beta_{j0}> s_{j0}): precomputes
// M = V1^T V2 once, takes r~(j0) = U1_{j0} M U2_{j0}^T per row, then
// U4 = diag(r~) U1, V4 = V1.
LowRankFactors gamma2_factors(const LowRankFactors& s_factors,
                              const LowRankFactors& beta_factors);

/// Concatenation [U3 | -U4][V3 | V4]^T representing Gamma1 - Gamma2.
LowRankFactors gamma_factors(const LowRankFactors& g1, const LowRankFactors& g2);

// g~ = sum_{j0,i} (U V^T)(j0, i) * (A1_{j0} kron A2_{i} kron vec(W_{j0-i})) / d
// computed with one FFT cross-correlation batch per (rank column, coordinate
// pair) and a sparse per-lag scatter. O(k d^2 n log n + n d^3). Any weight
// family is accepted here.
Vec fast_contract(const Instance& inst, const LowRankFactors& gamma,
                  int threads = 0);

/// Literal contraction against a dense gamma; materialization-guarded oracle.
Vec naive_contract(const Instance& inst, const Mat& gamma_dense);

struct FastOptions {
  Index k_cap = kDefaultKCap;
  enum class Verify { kAuto, kOn, kOff } verify = Verify::kAuto;
  int threads = 0;  // 0: take ROPEGRAD_THREADS (default 1)
};

struct FastGradientResult {
  Vec g;
  int degree = 0;
  Index lift_rank = 0;   // k1
  Index gamma_rank = 0;  // k3 + k4
  double shift = 0.0;
  std::map<std::string, std::int64_t> stage_ns;
  // Dense verification (auto for n <= 256, refused above 2048):
  std::optional<double> s_err, beta_err, gamma_err, g_err;
};

// Full pipeline: features -> build_poly on [0, 2 shift] -> lift -> beta ->
// gamma factors -> fast contraction, with per-stage timings.
FastGradientResult fast_gradient(const Instance& inst, double eps,
                                 const FastOptions& opts = {});

}  // namespace ropegrad
