// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/generator.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ropegrad/errors.hpp"
#include "ropegrad/tensor_ops.hpp"

namespace ropegrad {

std::uint64_t CounterRng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double CounterRng::unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * unit();
}

double CounterRng::gaussian() {
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = unit();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

void fill_uniform(CounterRng& rng, Mat& m, double beta) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-beta, beta);
}

// Row j0 of the exact attention output, without materializing any n x n
// intermediate. K and Vy are precomputed.
void expected_output_row(const Instance& inst, const Mat& K, const Mat& Vy,
                         Index j0, Eigen::Ref<Eigen::RowVectorXd> out) {
  const Index n = inst.n, d = inst.d;
  Vec q = (inst.A1.row(j0) * inst.X1).transpose();
  Vec k(d), wk(d);
  Vec arow(n);
  for (Index i = 0; i < n; ++i) {
    k = K.row(i).transpose();
    inst.weights.apply(j0 - i, k, wk);
    arow(i) = std::exp(q.dot(wk) / static_cast<double>(d));
  }
  const double denom = arow.sum();
  out = (arow / denom).transpose() * Vy;
}

}  // namespace

Instance gen_instance(std::uint64_t seed, Index n, Index d, double B,
                      WeightMode mode, const GenOptions& opts) {
  if (n < 1 || d < 1) throw ConfigError("gen_instance: need n >= 1 and d >= 1");
  if (!(B > 0.0)) throw ConfigError("gen_instance: B must be positive");
  Instance inst;
  inst.n = n;
  inst.d = d;
  inst.B = B;
  switch (mode) {
    case WeightMode::kIdentity:
      inst.weights = RopeWeights::identity(n, d);
      break;
    case WeightMode::kRotary:
      inst.weights = RopeWeights::rotary(n, d, opts.rotary_base);
      break;
    case WeightMode::kGeneral:
      throw ConfigError(
          "gen_instance: general weight tables come from instance files");
  }

  CounterRng rng(seed);
  const double beta = std::sqrt(B / static_cast<double>(d));
  inst.A1.resize(n, d);
  inst.A2.resize(n, d);
  inst.A3.resize(n, d);
  inst.X1.resize(d, d);
  inst.X2.resize(d, d);
  inst.Y.resize(d, d);
  fill_uniform(rng, inst.A1, beta);
  fill_uniform(rng, inst.A2, beta);
  fill_uniform(rng, inst.A3, beta);
  fill_uniform(rng, inst.X1, beta);
  fill_uniform(rng, inst.X2, beta);
  fill_uniform(rng, inst.Y, beta);

  // |sum_a A(j,a) X(a,b)| <= d beta^2 = B already; the rescale only absorbs
  // the last-ulp cases.
  auto rescale = [B](const Mat& a, Mat& x) {
    const double m = (a * x).cwiseAbs().maxCoeff();
    if (m > B) x *= B / m;
  };
  rescale(inst.A1, inst.X1);
  rescale(inst.A2, inst.X2);
  rescale(inst.A3, inst.Y);

  Mat K(n, d);
  for (Index i = 0; i < n; ++i) K.row(i) = inst.A2.row(i) * inst.X2;
  const Mat Vy = inst.A3 * inst.Y;
  inst.E.resize(n, d);
  for (Index j0 = 0; j0 < n; ++j0)
    expected_output_row(inst, K, Vy, j0, inst.E.row(j0));
  if (opts.sigma != 0.0)
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < d; ++c) inst.E(r, c) += opts.sigma * rng.gaussian();

  inst.validate();
  return inst;
}

double loss_free(const Instance& inst, const Mat& x_free) {
  const Index n = inst.n, d = inst.d;
  const Index d2 = d * d;
  if (x_free.rows() != d2 || x_free.cols() != d2)
    throw ShapeError("loss_free: middle matrix must be d^2 x d^2");

  // Per lag, fold the weight vector through the free matrix once:
  // logit(j0, i) = A1_{j0} M_t A2_i^T / d with M_t = unvec(Xfree vec(W_t)).
  std::vector<Mat> lag_mats(static_cast<size_t>(2 * n - 1));
  for (Index t = -(n - 1); t <= n - 1; ++t) {
    Vec w = vec(inst.weights.matrix(t));
    lag_mats[static_cast<size_t>(t + n - 1)] = unvec(x_free * w, d, d);
  }

  const Mat Vy = inst.A3 * inst.Y;
  double loss = 0.0;
  Vec arow(n);
  for (Index j0 = 0; j0 < n; ++j0) {
    for (Index i = 0; i < n; ++i) {
      const Mat& mt = lag_mats[static_cast<size_t>(j0 - i + n - 1)];
      const double z =
          (inst.A1.row(j0) * mt).dot(inst.A2.row(i)) / static_cast<double>(d);
      arow(i) = std::exp(z);
    }
    const double denom = arow.sum();
    Eigen::RowVectorXd crow = (arow / denom).transpose() * Vy - inst.E.row(j0);
    loss += 0.5 * crow.squaredNorm();
  }
  return loss;
}

Vec finite_diff_gradient(const Instance& inst, double h) {
  const Index d = inst.d;
  const Index d4 = d * d * d * d;
  if (d4 > kFiniteDiffGuard)
    throw SizeGuardError("finite_diff_gradient: d^4 = " + std::to_string(d4) +
                         " exceeds guard " + std::to_string(kFiniteDiffGuard));
  if (!(h > 0.0)) throw ConfigError("finite_diff_gradient: h must be positive");
  const Index d2 = d * d;
  Mat base = kron(inst.X1, inst.X2);
  Vec g(d4);
  for (Index i = 0; i < d4; ++i) {
    const Index r = i / d2, c = i % d2;
    Mat plus = base, minus = base;
    plus(r, c) += h;
    minus(r, c) -= h;
    g(i) = (loss_free(inst, plus) - loss_free(inst, minus)) / (2.0 * h);
  }
  return g;
}

}  // namespace ropegrad
