// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0
//
// Kronecker / row-wise Kronecker algebra and vectorization.
//
// Conventions (used consistently everywhere):
//  - kron pairs indices first-factor-major:
//      kron(M, N)(j0*r + j1, i0*s + i1) = M(j0, i0) * N(j1, i1)
//  - rowwise_kron(U, V)(i, l1*k2 + l2) = U(i, l1) * V(i, l2)
//  - vec stacks rows (row-major): vec(M)(i*cols + j) = M(i, j)
// Under these, vec(A1 * X * A2^T) == kron(A1, A2) * vec(X) holds exactly.

#pragma once

#include <string>

#include "ropegrad/errors.hpp"
#include "ropegrad/types.hpp"

namespace ropegrad {

inline constexpr Index kMaxKronEntries = Index(1) << 28;

template <typename D1, typename D2>
Mat kron(const Eigen::MatrixBase<D1>& m, const Eigen::MatrixBase<D2>& n) {
  const Index p = m.rows(), q = m.cols();
  const Index r = n.rows(), s = n.cols();
  if ((r != 0 && p > kMaxKronEntries / r) ||
      (s != 0 && q > kMaxKronEntries / s))
    throw SizeGuardError("kron: output dimensions exceed size guard");
  const Index pr = p * r, qs = q * s;
  if (qs != 0 && pr > kMaxKronEntries / qs)
    throw SizeGuardError("kron: output of " + std::to_string(pr) + "x" +
                         std::to_string(qs) + " exceeds size guard");
  Mat out(p * r, q * s);
  for (Index j0 = 0; j0 < p; ++j0)
    for (Index i0 = 0; i0 < q; ++i0)
      out.block(j0 * r, i0 * s, r, s) = m(j0, i0) * n.derived();
  return out;
}

template <typename D1, typename D2>
Mat rowwise_kron(const Eigen::MatrixBase<D1>& u,
                 const Eigen::MatrixBase<D2>& v) {
  if (u.rows() != v.rows())
    throw ShapeError("rowwise_kron: row counts differ (" +
                     std::to_string(u.rows()) + " vs " +
                     std::to_string(v.rows()) + ")");
  const Index n = u.rows(), k1 = u.cols(), k2 = v.cols();
  Mat out(n, k1 * k2);
  for (Index i = 0; i < n; ++i)
    for (Index l1 = 0; l1 < k1; ++l1)
      out.row(i).segment(l1 * k2, k2) = u(i, l1) * v.row(i);
  return out;
}

/// Row-major stacking of a matrix into a vector.
template <typename D>
Vec vec(const Eigen::MatrixBase<D>& m) {
  Mat tmp = m;  // row-major evaluation
  return Eigen::Map<const Vec>(tmp.data(), tmp.size());
}

inline Mat unvec(const Vec& v, Index rows, Index cols) {
  if (v.size() != rows * cols)
    throw ShapeError("unvec: length " + std::to_string(v.size()) +
                     " does not factor as " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

template <typename D1, typename D2>
Mat hadamard(const Eigen::MatrixBase<D1>& a, const Eigen::MatrixBase<D2>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("hadamard: shape mismatch");
  return a.cwiseProduct(b);
}

/// vec(A1 * X * A2^T) without forming the Kronecker factor.
template <typename D1, typename D2, typename D3>
Vec tensor_trick(const Eigen::MatrixBase<D1>& a1,
                 const Eigen::MatrixBase<D2>& x,
                 const Eigen::MatrixBase<D3>& a2) {
  if (a1.cols() != x.rows() || x.cols() != a2.cols())
    throw ShapeError("tensor_trick: incompatible shapes");
  Mat prod = a1 * x * a2.transpose();
  return vec(prod);
}

}  // namespace ropegrad
