// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/exact_grad.hpp"

#include <cmath>

#include <doctest.h>

#include "ropegrad/errors.hpp"
#include "ropegrad/generator.hpp"
#include "ropegrad/lowrank_grad.hpp"
#include "ropegrad/tensor_ops.hpp"

using namespace ropegrad;

TEST_CASE("compute_beta matches the summation oracle") {
  Instance inst = gen_instance(60, 4, 2, 0.5, WeightMode::kRotary);
  ForwardState st = forward(inst);
  Mat beta = compute_beta(st);
  for (Index j0 = 0; j0 < 4; ++j0) {
    Vec row = Vec::Zero(4);
    for (Index i0 = 0; i0 < 2; ++i0) row += st.C(j0, i0) * st.Vy.col(i0);
    CHECK((beta.row(j0).transpose() - row).cwiseAbs().maxCoeff() <= 1e-14);
  }

  ForwardState zero = st;
  zero.C.setZero();
  CHECK(compute_beta(zero).isZero(0.0));

  // 1x1: plain scalar product.
  ForwardState s1;
  s1.C = Mat::Constant(1, 1, 3.0);
  s1.Vy = Mat::Constant(1, 1, -2.0);
  CHECK(compute_beta(s1)(0, 0) == -6.0);
}

TEST_CASE("compute_gamma matches the dense diag-minus-outer oracle") {
  Instance inst = gen_instance(61, 4, 2, 0.5, WeightMode::kIdentity);
  ForwardState st = forward(inst);
  Mat beta = compute_beta(st);
  Mat gamma = compute_gamma(st, beta);
  for (Index j0 = 0; j0 < 4; ++j0) {
    Vec s = st.S.row(j0).transpose();
    Mat proj = Mat(s.asDiagonal()) - s * s.transpose();
    Vec want = proj * beta.row(j0).transpose();
    CHECK((gamma.row(j0).transpose() - want).cwiseAbs().maxCoeff() <= 1e-14);
  }

  CHECK(compute_gamma(st, Mat::Zero(4, 4)).isZero(0.0));

  // Uniform softmax rows kill constant beta rows.
  ForwardState uni = st;
  uni.S = Mat::Constant(4, 4, 0.25);
  Mat const_beta = Mat::Ones(4, 4) * 0.7;
  CHECK(compute_gamma(uni, const_beta).cwiseAbs().maxCoeff() <= 1e-16);
}

TEST_CASE("row-constant shifts of beta leave gamma unchanged") {
  Instance inst = gen_instance(62, 5, 2, 0.5, WeightMode::kRotary);
  ForwardState st = forward(inst);
  Mat beta = compute_beta(st);
  Mat shifted = beta;
  shifted.row(2).array() += 3.25;
  Mat a = compute_gamma(st, beta), b = compute_gamma(st, shifted);
  CHECK((a.row(2) - b.row(2)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("exact gradient vanishes in the degenerate cases") {
  GenOptions quiet;
  quiet.sigma = 0.0;
  Instance zr = gen_instance(63, 6, 2, 0.5, WeightMode::kRotary, quiet);
  CHECK(exact_gradient(zr).g.cwiseAbs().maxCoeff() < 1e-12);

  Instance one = gen_instance(64, 1, 2, 0.5, WeightMode::kIdentity);
  GradIntermediates gi = exact_gradient(one);
  CHECK(gi.Gamma.cwiseAbs().maxCoeff() == 0.0);
  CHECK(gi.g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("structured assembly equals the literal contraction") {
  for (WeightMode mode : {WeightMode::kIdentity, WeightMode::kRotary}) {
    Instance inst = gen_instance(65, 8, 2, 0.5, mode);
    GradIntermediates gi = exact_gradient(inst);
    Vec naive = naive_contract(inst, gi.Gamma);
    CHECK((gi.g - naive).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("gradient matches finite differences") {
  Instance inst = gen_instance(66, 4, 2, 0.5, WeightMode::kIdentity);
  Vec g = exact_gradient(inst).g;
  Vec fd = finite_diff_gradient(inst, 1e-5);
  const double rel =
      (g - fd).cwiseAbs().maxCoeff() / std::max(g.cwiseAbs().maxCoeff(), 1e-12);
  CHECK(rel <= 1e-5);

  // Halving h improves the agreement (second-order behaviour, observed).
  Vec fd_coarse = finite_diff_gradient(inst, 1e-3);
  const double rel_coarse = (g - fd_coarse).cwiseAbs().maxCoeff() /
                            std::max(g.cwiseAbs().maxCoeff(), 1e-12);
  CHECK(rel <= rel_coarse);
}

TEST_CASE("entry oracle: hand-expanded 2-term sum at n=2, d=1") {
  Instance inst = gen_instance(67, 2, 1, 0.5, WeightMode::kIdentity);
  ForwardState st = forward(inst);
  // d^4 = 1, so the single coordinate differentiates through both logits.
  // Hand expansion of the Part 7 sum with scalars:
  double want = 0.0;
  for (Index j0 = 0; j0 < 2; ++j0) {
    const double a0 = inst.A1(j0, 0) * inst.A2(0, 0);
    const double a1 = inst.A1(j0, 0) * inst.A2(1, 0);
    const double s0 = st.S(j0, 0), s1 = st.S(j0, 1);
    const double inner = a0 * s0 + a1 * s1;
    const double t0 = -s0 * inner + s0 * a0;
    const double t1 = -s1 * inner + s1 * a1;
    want += st.C(j0, 0) * (t0 * st.Vy(0, 0) + t1 * st.Vy(1, 0));
  }
  CHECK(gradient_entry_oracle(inst, 0) == doctest::Approx(want).epsilon(1e-12));
  // And the same value from finite differences.
  CHECK(finite_diff_gradient(inst, 1e-6)(0) ==
        doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("entry oracle agrees with the structured gradient") {
  for (WeightMode mode : {WeightMode::kIdentity, WeightMode::kRotary}) {
    Instance inst = gen_instance(68, 4, 2, 0.5, mode);
    Vec g = exact_gradient(inst).g;
    Vec oracle = gradient_oracle_all(inst);
    CHECK((g - oracle).cwiseAbs().maxCoeff() <= 1e-10);
  }

  Instance inst = gen_instance(69, 4, 2, 0.5, WeightMode::kRotary);
  GenOptions quiet;
  quiet.sigma = 0.0;
  Instance zr = gen_instance(69, 4, 2, 0.5, WeightMode::kRotary, quiet);
  for (Index i = 0; i < 16; ++i)
    CHECK(std::abs(gradient_entry_oracle(zr, i)) <= 1e-13);
  CHECK_THROWS_AS(gradient_entry_oracle(inst, 99), ConfigError);
}

TEST_CASE("derivative parts track finite differences") {
  Instance inst = gen_instance(70, 5, 2, 0.5, WeightMode::kRotary);
  ForwardState st = forward(inst);
  Vec x = vec(kron(inst.X1, inst.X2));
  const double h = 1e-6;
  const Index j0 = 2;
  Mat block = build_tilde_A_block(inst, j0);

  auto u_at = [&](const Vec& xv) -> Vec { return (block * xv).array().exp(); };
  Vec u = u_at(x);
  const double alpha = u.sum();
  Vec s = u / alpha;

  for (Index i : {Index(0), Index(5), Index(11), Index(15)}) {
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    Vec up = u_at(xp), um = u_at(xm);
    Vec col = grad_parts::part1_dax(block, i);

    Vec du_fd = (up - um) / (2 * h);
    CHECK((grad_parts::part2_du(u, col) - du_fd).cwiseAbs().maxCoeff() <=
          1e-7 * std::max(1.0, u.cwiseAbs().maxCoeff()));

    const double dalpha_fd = (up.sum() - um.sum()) / (2 * h);
    CHECK(grad_parts::part3_dalpha(col, u) ==
          doctest::Approx(dalpha_fd).epsilon(1e-6));

    Vec sp = up / up.sum(), sm = um / um.sum();
    Vec ds_fd = (sp - sm) / (2 * h);
    CHECK((grad_parts::part4_ds(s, col) - ds_fd).cwiseAbs().maxCoeff() <= 1e-7);

    for (Index i0 = 0; i0 < inst.d; ++i0) {
      const double dinner_fd =
          (sp.dot(st.Vy.col(i0)) - sm.dot(st.Vy.col(i0))) / (2 * h);
      CHECK(grad_parts::part5_dinner(s, col, st.Vy.col(i0)) ==
            doctest::Approx(dinner_fd).epsilon(1e-5));
      const double c = st.C(j0, i0);
      const double lp = 0.5 * std::pow(sp.dot(st.Vy.col(i0)) - inst.E(j0, i0), 2);
      const double lm = 0.5 * std::pow(sm.dot(st.Vy.col(i0)) - inst.E(j0, i0), 2);
      CHECK(grad_parts::part7_dloss(c, s, col, st.Vy.col(i0)) ==
            doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
    }
  }
}

TEST_CASE("chain rule to factor gradients") {
  Instance inst = gen_instance(71, 4, 2, 0.5, WeightMode::kIdentity);
  Vec g = exact_gradient(inst).g;

  auto [g1, g2] = chain_to_factors(g, inst.X1, inst.X2);
  CHECK(g1.rows() == 2);

  const double h = 1e-5;
  for (Index a = 0; a < 2; ++a)
    for (Index b = 0; b < 2; ++b) {
      Instance p = inst, m = inst;
      p.X1(a, b) += h;
      m.X1(a, b) -= h;
      const double fd = (forward(p).loss - forward(m).loss) / (2 * h);
      CHECK(std::abs(g1(a, b) - fd) /
                std::max(g1.cwiseAbs().maxCoeff(), 1e-12) <=
            1e-5);
      p = inst;
      m = inst;
      p.X2(a, b) += h;
      m.X2(a, b) -= h;
      const double fd2 = (forward(p).loss - forward(m).loss) / (2 * h);
      CHECK(std::abs(g2(a, b) - fd2) /
                std::max(g2.cwiseAbs().maxCoeff(), 1e-12) <=
            1e-5);
    }

  // X2 = 0 makes the X1 gradient vanish; d = 1 reduces to scalar products.
  auto [z1, z2] = chain_to_factors(g, inst.X1, Mat::Zero(2, 2));
  CHECK(z1.isZero(0.0));
  Vec g_scalar = Vec::Constant(1, 2.5);
  auto [s1, s2] = chain_to_factors(g_scalar, Mat::Constant(1, 1, 3.0),
                                   Mat::Constant(1, 1, -1.0));
  CHECK(s1(0, 0) == doctest::Approx(-2.5));
  CHECK(s2(0, 0) == doctest::Approx(7.5));
}
