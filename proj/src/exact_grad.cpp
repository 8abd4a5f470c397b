// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/exact_grad.hpp"

#include <string>

#include "ropegrad/errors.hpp"
#include "ropegrad/tensor_ops.hpp"

namespace ropegrad {

Mat compute_beta(const ForwardState& state) {
  return state.C * state.Vy.transpose();
}

Mat compute_gamma(const ForwardState& state, const Mat& beta) {
  const Index n = state.S.rows();
  if (beta.rows() != n || beta.cols() != n)
    throw ShapeError("compute_gamma: beta must be n x n");
  Mat gamma(n, n);
  for (Index j0 = 0; j0 < n; ++j0) {
    const auto s = state.S.row(j0);
    const auto b = beta.row(j0);
    const double dot = s.dot(b);
    gamma.row(j0) = s.cwiseProduct(b) - dot * s;
  }
  return gamma;
}

Vec assemble_gradient(const Instance& inst, const Mat& gamma) {
  const Index n = inst.n, d = inst.d;
  if (gamma.rows() != n || gamma.cols() != n)
    throw ShapeError("assemble_gradient: gamma must be n x n");
  const Index d2 = d * d;
  Vec g = Vec::Zero(d2 * d2);
  const double inv_d = 1.0 / static_cast<double>(d);
  Mat lag_sum(d, d);
  for (Index t = -(n - 1); t <= n - 1; ++t) {
    lag_sum.setZero();
    const Index lo = std::max<Index>(0, -t);
    const Index hi = std::min<Index>(n, n - t);
    for (Index i = lo; i < hi; ++i)
      lag_sum.noalias() +=
          gamma(i + t, i) * (inst.A1.row(i + t).transpose() * inst.A2.row(i));
    inst.weights.for_each_entry(t, [&](Index b, Index e, double w) {
      const double wv = w * inv_d;
      for (Index a = 0; a < d; ++a)
        for (Index c = 0; c < d; ++c)
          g((a * d + c) * d2 + (b * d + e)) += lag_sum(a, c) * wv;
    });
  }
  return g;
}

GradIntermediates exact_gradient(const Instance& inst) {
  ForwardState st = forward(inst);
  GradIntermediates out;
  out.Beta = compute_beta(st);
  out.Gamma = compute_gamma(st, out.Beta);
  out.g = assemble_gradient(inst, out.Gamma);
  return out;
}

namespace grad_parts {

Vec part1_dax(const Mat& block, Index i) { return block.col(i); }

Vec part2_du(const Vec& u, const Vec& col) { return u.cwiseProduct(col); }

double part3_dalpha(const Vec& col, const Vec& u) { return col.dot(u); }

Vec part4_ds(const Vec& s, const Vec& col) {
  return -s * col.dot(s) + s.cwiseProduct(col);
}

double part5_dinner(const Vec& s, const Vec& col, const Vec& vy_col) {
  return part4_ds(s, col).dot(vy_col);
}

double part7_dloss(double c, const Vec& s, const Vec& col, const Vec& vy_col) {
  return c * part5_dinner(s, col, vy_col);
}

}  // namespace grad_parts

double gradient_entry_oracle(const Instance& inst, Index i) {
  const Index d = inst.d;
  const Index d4 = d * d * d * d;
  if (i < 0 || i >= d4)
    throw ConfigError("gradient_entry_oracle: coordinate out of range");
  ForwardState st = forward(inst);
  double acc = 0.0;
  for (Index j0 = 0; j0 < inst.n; ++j0) {
    Mat block = build_tilde_A_block(inst, j0);
    Vec col = grad_parts::part1_dax(block, i);
    Vec s = st.S.row(j0).transpose();
    for (Index i0 = 0; i0 < d; ++i0)
      acc += grad_parts::part7_dloss(st.C(j0, i0), s, col, st.Vy.col(i0));
  }
  return acc;
}

Vec gradient_oracle_all(const Instance& inst) {
  const Index d = inst.d;
  const Index d4 = d * d * d * d;
  ForwardState st = forward(inst);
  Vec g = Vec::Zero(d4);
  for (Index j0 = 0; j0 < inst.n; ++j0) {
    Mat block = build_tilde_A_block(inst, j0);
    Vec s = st.S.row(j0).transpose();
    for (Index i = 0; i < d4; ++i) {
      Vec col = grad_parts::part1_dax(block, i);
      for (Index i0 = 0; i0 < d; ++i0)
        g(i) += grad_parts::part7_dloss(st.C(j0, i0), s, col, st.Vy.col(i0));
    }
  }
  return g;
}

std::pair<Mat, Mat> chain_to_factors(const Vec& g, const Mat& x1,
                                     const Mat& x2) {
  const Index d = x1.rows();
  if (x1.cols() != d || x2.rows() != d || x2.cols() != d)
    throw ShapeError("chain_to_factors: X1, X2 must be square and equal-sized");
  const Index d2 = d * d;
  if (g.size() != d2 * d2)
    throw ShapeError("chain_to_factors: gradient length must be d^4");
  Mat big = unvec(g, d2, d2);
  Mat g1 = Mat::Zero(d, d), g2 = Mat::Zero(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b)
      for (Index c = 0; c < d; ++c)
        for (Index e = 0; e < d; ++e) {
          const double v = big(a * d + c, b * d + e);
          g1(a, b) += v * x2(c, e);
          g2(c, e) += v * x1(a, b);
        }
  return {g1, g2};
}

}  // namespace ropegrad
