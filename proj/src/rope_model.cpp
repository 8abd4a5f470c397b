// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/rope_model.hpp"

#include <cmath>
#include <set>
#include <string>

#include "ropegrad/errors.hpp"
#include "ropegrad/tensor_ops.hpp"

namespace ropegrad {

namespace {

// Support of a general family must stay inside a fixed index set of O(d)
// entries; 4d leaves headroom over the 2d a rotary family uses.
constexpr Index kGeneralSupportFactor = 4;

}  // namespace

RopeWeights RopeWeights::identity(Index n, Index d) {
  if (n < 1 || d < 1) throw ConfigError("weights: need n >= 1 and d >= 1");
  RopeWeights w;
  w.mode_ = WeightMode::kIdentity;
  w.n_ = n;
  w.d_ = d;
  return w;
}

RopeWeights RopeWeights::rotary(Index n, Index d, double base) {
  if (n < 1 || d < 1) throw ConfigError("weights: need n >= 1 and d >= 1");
  if (d % 2 != 0)
    throw ConfigError("rotary weights need even head dimension, got d = " +
                      std::to_string(d));
  if (!(base > 0.0)) throw ConfigError("rotary base must be positive");
  RopeWeights w;
  w.mode_ = WeightMode::kRotary;
  w.n_ = n;
  w.d_ = d;
  w.base_ = base;
  w.thetas_.resize(static_cast<size_t>(d / 2));
  for (Index b = 0; b < d / 2; ++b)
    w.thetas_[static_cast<size_t>(b)] =
        std::pow(base, -2.0 * static_cast<double>(b) / static_cast<double>(d));
  return w;
}

RopeWeights RopeWeights::general(
    Index n, Index d,
    std::vector<std::pair<Index, std::vector<WeightEntry>>> table) {
  if (n < 1 || d < 1) throw ConfigError("weights: need n >= 1 and d >= 1");
  RopeWeights w;
  w.mode_ = WeightMode::kGeneral;
  w.n_ = n;
  w.d_ = d;
  w.by_lag_.assign(static_cast<size_t>(2 * n - 1), {});
  std::set<std::pair<Index, Index>> support;
  for (auto& [t, entries] : table) {
    if (t < -(n - 1) || t > n - 1)
      throw ConfigError("general weights: lag " + std::to_string(t) +
                        " out of range");
    for (const auto& e : entries) {
      if (e.row < 0 || e.row >= d || e.col < 0 || e.col >= d)
        throw ConfigError("general weights: entry index out of range at lag " +
                          std::to_string(t));
      if (!std::isfinite(e.value) || std::abs(e.value) > 1.0)
        throw BoundError("general weights: |W_t| entries must be <= 1 (lag " +
                         std::to_string(t) + ")");
      support.insert({e.row, e.col});
    }
    w.by_lag_[static_cast<size_t>(t + n - 1)] = entries;
  }
  if (static_cast<Index>(support.size()) > kGeneralSupportFactor * d)
    throw BoundError("general weights: union support has " +
                     std::to_string(support.size()) +
                     " entries, exceeding the O(d) cap " +
                     std::to_string(kGeneralSupportFactor * d));
  w.table_ = std::move(table);
  return w;
}

void RopeWeights::check_lag(Index t) const {
  if (t < -(n_ - 1) || t > n_ - 1)
    throw ConfigError("weight lag " + std::to_string(t) + " out of range for n = " +
                      std::to_string(n_));
}

Mat RopeWeights::matrix(Index t) const {
  check_lag(t);
  Mat m = Mat::Zero(d_, d_);
  for_each_entry(t, [&](Index r, Index c, double v) { m(r, c) += v; });
  return m;
}

void RopeWeights::apply(Index t, const Vec& v, Vec& out) const {
  check_lag(t);
  out.setZero(d_);
  switch (mode_) {
    case WeightMode::kIdentity:
      out = v;
      break;
    case WeightMode::kRotary: {
      const double td = static_cast<double>(t);
      for (Index b = 0; b < d_ / 2; ++b) {
        const double phi = td * thetas_[static_cast<size_t>(b)];
        const double c = std::cos(phi), s = std::sin(phi);
        out(2 * b) = c * v(2 * b) - s * v(2 * b + 1);
        out(2 * b + 1) = s * v(2 * b) + c * v(2 * b + 1);
      }
      break;
    }
    case WeightMode::kGeneral:
      for (const auto& e : by_lag_[static_cast<size_t>(t + n_ - 1)])
        out(e.row) += e.value * v(e.col);
      break;
  }
}

void RopeWeights::for_each_entry(
    Index t, const std::function<void(Index, Index, double)>& fn) const {
  check_lag(t);
  switch (mode_) {
    case WeightMode::kIdentity:
      for (Index i = 0; i < d_; ++i) fn(i, i, 1.0);
      break;
    case WeightMode::kRotary: {
      const double td = static_cast<double>(t);
      for (Index b = 0; b < d_ / 2; ++b) {
        const double phi = td * thetas_[static_cast<size_t>(b)];
        const double c = std::cos(phi), s = std::sin(phi);
        fn(2 * b, 2 * b, c);
        fn(2 * b, 2 * b + 1, -s);
        fn(2 * b + 1, 2 * b, s);
        fn(2 * b + 1, 2 * b + 1, c);
      }
      break;
    }
    case WeightMode::kGeneral:
      for (const auto& e : by_lag_[static_cast<size_t>(t + n_ - 1)])
        fn(e.row, e.col, e.value);
      break;
  }
}

Index RopeWeights::nnz(Index t) const {
  check_lag(t);
  switch (mode_) {
    case WeightMode::kIdentity:
      return d_;
    case WeightMode::kRotary:
      return 2 * d_;
    case WeightMode::kGeneral:
      return static_cast<Index>(by_lag_[static_cast<size_t>(t + n_ - 1)].size());
  }
  return 0;
}

double RopeWeights::support_factor() const {
  switch (mode_) {
    case WeightMode::kIdentity:
      return 1.0;
    case WeightMode::kRotary:
      return 2.0;
    case WeightMode::kGeneral: {
      Index m = 0;
      for (const auto& entries : by_lag_)
        m = std::max(m, static_cast<Index>(entries.size()));
      return static_cast<double>(m) / static_cast<double>(d_);
    }
  }
  return 1.0;
}

RopeWeights make_rotary_weights(Index n, Index d, double base) {
  return RopeWeights::rotary(n, d, base);
}

void Instance::validate() const {
  if (n < 1 || d < 1) throw ConfigError("instance: need n >= 1 and d >= 1");
  auto check_shape = [](const Mat& m, Index r, Index c, const char* name) {
    if (m.rows() != r || m.cols() != c)
      throw ShapeError(std::string("instance: ") + name + " must be " +
                       std::to_string(r) + "x" + std::to_string(c) + ", got " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  };
  check_shape(A1, n, d, "A1");
  check_shape(A2, n, d, "A2");
  check_shape(A3, n, d, "A3");
  check_shape(X1, d, d, "X1");
  check_shape(X2, d, d, "X2");
  check_shape(Y, d, d, "Y");
  check_shape(E, n, d, "E");
  for (const auto* m : {&A1, &A2, &A3, &X1, &X2, &Y, &E})
    if (!m->allFinite()) throw BoundError("instance: non-finite entry");
  if (!(B > 0.0)) throw ConfigError("instance: B must be positive");
  if (weights.n() != n || weights.d() != d)
    throw ShapeError("instance: weight family shaped for different (n, d)");
  const double slack = 1.0 + 1e-12;
  if ((A1 * X1).cwiseAbs().maxCoeff() > B * slack)
    throw BoundError("instance: |A1 X1|_inf exceeds B");
  if ((A2 * X2).cwiseAbs().maxCoeff() > B * slack)
    throw BoundError("instance: |A2 X2|_inf exceeds B");
  if ((A3 * Y).cwiseAbs().maxCoeff() > B * slack)
    throw BoundError("instance: |A3 Y|_inf exceeds B");
  if (logit_bound() > kLogitOverflowCap)
    throw BoundError("instance: c_S * B^2 = " + std::to_string(logit_bound()) +
                     " exceeds " + std::to_string(kLogitOverflowCap) +
                     "; choose a smaller B");
}

namespace {

// Row j0 of A1 * X1, evaluated the same way everywhere so logit() and
// forward() agree bit for bit.
inline Vec query_row(const Instance& inst, Index j0) {
  return (inst.A1.row(j0) * inst.X1).transpose();
}

inline Vec key_row(const Instance& inst, Index i) {
  return (inst.A2.row(i) * inst.X2).transpose();
}

inline double logit_from_rows(const Instance& inst, const Vec& q, const Vec& k,
                              Index t, Vec& scratch) {
  inst.weights.apply(t, k, scratch);
  return q.dot(scratch) / static_cast<double>(inst.d);
}

}  // namespace

double logit(const Instance& inst, Index j0, Index i) {
  if (j0 < 0 || j0 >= inst.n || i < 0 || i >= inst.n)
    throw ConfigError("logit: index out of range");
  Vec q = query_row(inst, j0);
  Vec k = key_row(inst, i);
  Vec scratch(inst.d);
  return logit_from_rows(inst, q, k, j0 - i, scratch);
}

ForwardState forward(const Instance& inst) {
  const Index n = inst.n, d = inst.d;
  ForwardState st;
  Mat Q(n, d), K(n, d);
  for (Index j = 0; j < n; ++j) Q.row(j) = inst.A1.row(j) * inst.X1;
  for (Index i = 0; i < n; ++i) K.row(i) = inst.A2.row(i) * inst.X2;

  st.A.resize(n, n);
  Vec k(d), scratch(d), q(d);
  for (Index j0 = 0; j0 < n; ++j0) {
    q = Q.row(j0).transpose();
    for (Index i = 0; i < n; ++i) {
      k = K.row(i).transpose();
      const double z = logit_from_rows(inst, q, k, j0 - i, scratch);
      if (std::abs(z) > 700.0)
        throw BoundError("forward: logit magnitude " + std::to_string(z) +
                         " would overflow exp; reduce B");
      st.A(j0, i) = std::exp(z);
    }
  }
  st.Dvec = st.A.rowwise().sum();
  st.S = st.A.array().colwise() / st.Dvec.array();
  st.Vy = inst.A3 * inst.Y;
  st.C = st.S * st.Vy - inst.E;
  st.loss = 0.5 * st.C.squaredNorm();
  return st;
}

Mat normalize_rows(const Mat& m) {
  Vec sums = m.rowwise().sum();
  return m.array().colwise() / sums.array();
}

Mat build_tilde_A_block(const Instance& inst, Index j0) {
  const Index n = inst.n, d = inst.d;
  const Index d4 = d * d * d * d;
  if (n * n * d4 > kTildeAGuard)
    throw SizeGuardError("build_tilde_A_block: n^2 d^4 = " +
                         std::to_string(n * n * d4) + " exceeds guard");
  if (j0 < 0 || j0 >= n) throw ConfigError("build_tilde_A_block: j0 out of range");
  Mat block(n, d4);
  const double inv_d = 1.0 / static_cast<double>(d);
  for (Index i = 0; i < n; ++i) {
    Vec w = vec(inst.weights.matrix(j0 - i));
    for (Index a = 0; a < d; ++a)
      for (Index c = 0; c < d; ++c)
        block.row(i).segment((a * d + c) * d * d, d * d) =
            inst.A1(j0, a) * inst.A2(i, c) * inv_d * w.transpose();
  }
  return block;
}

}  // namespace ropegrad
