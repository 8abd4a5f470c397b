// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/rope_model.hpp"

#include <cmath>
#include <sstream>

#include <doctest.h>

#include "ropegrad/errors.hpp"
#include "ropegrad/generator.hpp"
#include "ropegrad/instance_io.hpp"
#include "ropegrad/tensor_ops.hpp"

using namespace ropegrad;

TEST_CASE("rotary weights: identity at lag zero, rotation entries, orthogonality") {
  RopeWeights w = make_rotary_weights(8, 2, 123.0);
  CHECK((w.matrix(0) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-15);

  // d = 2 has a single block with theta_0 = base^0 = 1 radian.
  Mat r1 = w.matrix(1);
  CHECK(r1(0, 0) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(r1(0, 1) == doctest::Approx(-std::sin(1.0)).epsilon(1e-15));
  CHECK(r1(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(r1(1, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));

  RopeWeights w4 = make_rotary_weights(8, 4, 10000.0);
  for (Index t = -3; t <= 3; ++t) {
    Mat m = w4.matrix(t);
    CHECK((m * m.transpose() - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() <=
          1e-12);
    CHECK((w4.matrix(-t) - m.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
  }

  CHECK_THROWS_AS(make_rotary_weights(8, 3, 10.0), ConfigError);
  CHECK_THROWS_AS(make_rotary_weights(8, 4, 0.0), ConfigError);
}

TEST_CASE("weight apply agrees with the dense matrix") {
  CounterRng rng(43);
  for (WeightMode mode : {WeightMode::kIdentity, WeightMode::kRotary}) {
    Instance inst = gen_instance(44, 6, 4, 0.5, mode);
    Vec v(4), out(4);
    for (Index i = 0; i < 4; ++i) v(i) = rng.uniform(-1, 1);
    for (Index t = -5; t <= 5; ++t) {
      inst.weights.apply(t, v, out);
      CHECK((out - inst.weights.matrix(t) * v).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("general weights enforce norm and support caps") {
  std::vector<std::pair<Index, std::vector<WeightEntry>>> table;
  table.push_back({0, {{0, 0, 2.0}}});
  CHECK_THROWS_AS(RopeWeights::general(2, 2, table), BoundError);

  table.clear();
  table.push_back({3, {{0, 0, 0.5}}});
  CHECK_THROWS_AS(RopeWeights::general(2, 2, table), ConfigError);

  table.clear();
  table.push_back({0, {{0, 0, 0.5}, {1, 1, -0.25}}});
  table.push_back({1, {{0, 1, 1.0}}});
  RopeWeights w = RopeWeights::general(2, 2, table);
  CHECK(w.matrix(0)(0, 0) == 0.5);
  CHECK(w.matrix(1)(0, 1) == 1.0);
  CHECK(w.matrix(-1).isZero(0.0));  // absent lags are zero
  CHECK(w.nnz(0) == 2);
}

TEST_CASE("logit special cases") {
  Instance zero = gen_instance(45, 4, 2, 0.5, WeightMode::kRotary);
  zero.X1.setZero();
  for (Index j0 = 0; j0 < 4; ++j0)
    for (Index i = 0; i < 4; ++i) CHECK(logit(zero, j0, i) == 0.0);

  // Scalar identity case: logit = a * b with d = 1.
  Instance tiny;
  tiny.n = 1;
  tiny.d = 1;
  tiny.B = 4.0;
  tiny.A1 = Mat::Constant(1, 1, 2.0);
  tiny.A2 = Mat::Constant(1, 1, 3.0);
  tiny.A3 = Mat::Constant(1, 1, 1.0);
  tiny.X1 = Mat::Constant(1, 1, 1.0);
  tiny.X2 = Mat::Constant(1, 1, 1.0);
  tiny.Y = Mat::Constant(1, 1, 1.0);
  tiny.E = Mat::Constant(1, 1, 0.0);
  tiny.weights = RopeWeights::identity(1, 1);
  tiny.validate();
  CHECK(logit(tiny, 0, 0) == doctest::Approx(6.0).epsilon(1e-15));

  CHECK_THROWS_AS(logit(tiny, 1, 0), ConfigError);
}

TEST_CASE("rotary logit matches the cos/sin pairing form") {
  Instance inst = gen_instance(46, 6, 2, 0.5, WeightMode::kRotary);
  Mat Q = inst.A1 * inst.X1;
  Mat K = inst.A2 * inst.X2;
  for (Index j0 = 0; j0 < 6; ++j0)
    for (Index i = 0; i < 6; ++i) {
      const double theta = 1.0;  // base^0 for block 0
      const double phi = static_cast<double>(j0 - i) * theta;
      const double p = Q(j0, 0) * K(i, 0) + Q(j0, 1) * K(i, 1);
      const double q = Q(j0, 1) * K(i, 0) - Q(j0, 0) * K(i, 1);
      const double expect = (p * std::cos(phi) + q * std::sin(phi)) / 2.0;
      CHECK(logit(inst, j0, i) == doctest::Approx(expect).epsilon(1e-12));
      CHECK(std::abs(logit(inst, j0, i)) <= inst.logit_bound() + 1e-12);
    }
}

TEST_CASE("rotary logit depends only on rows and the lag") {
  // Repeat the same A rows so shifted index pairs share rows; equal lags must
  // then give equal logits.
  Instance inst = gen_instance(47, 6, 2, 0.5, WeightMode::kRotary);
  for (Index j = 0; j < 6; ++j) {
    inst.A1.row(j) = inst.A1.row(0);
    inst.A2.row(j) = inst.A2.row(0);
  }
  for (Index shift = 1; shift < 4; ++shift)
    CHECK(logit(inst, 2, 1) ==
          doctest::Approx(logit(inst, 2 + shift, 1 + shift)).epsilon(1e-13));
}

TEST_CASE("forward state basics") {
  Instance inst = gen_instance(48, 8, 4, 0.5, WeightMode::kRotary);
  ForwardState st = forward(inst);

  for (Index j0 = 0; j0 < 8; ++j0)
    for (Index i = 0; i < 8; ++i)
      CHECK(st.A(j0, i) ==
            doctest::Approx(std::exp(logit(inst, j0, i))).epsilon(1e-14));
  CHECK((st.S.rowwise().sum() - Vec::Ones(8)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(st.A.minCoeff() > 0.0);
  CHECK(st.Dvec.minCoeff() > 0.0);
  CHECK(st.loss >= 0.0);

  // Loss agrees with the entrywise double sum.
  double double_sum = 0.0;
  for (Index j0 = 0; j0 < 8; ++j0)
    for (Index i0 = 0; i0 < 4; ++i0) {
      const double c = st.S.row(j0).dot(st.Vy.col(i0)) - inst.E(j0, i0);
      double_sum += 0.5 * c * c;
    }
  CHECK(st.loss == doctest::Approx(double_sum).epsilon(1e-10));
}

TEST_CASE("forward degenerate cases") {
  Instance inst = gen_instance(49, 5, 2, 0.5, WeightMode::kIdentity);
  inst.X1.setZero();
  inst.X2.setZero();
  ForwardState st = forward(inst);
  CHECK((st.A - Mat::Ones(5, 5)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((st.Dvec - Vec::Constant(5, 5.0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((st.S - Mat::Constant(5, 5, 0.2)).cwiseAbs().maxCoeff() <= 1e-15);
  // Output rows are the column means of Vy.
  Mat out = st.S * st.Vy;
  for (Index j = 0; j < 5; ++j)
    CHECK((out.row(j) - st.Vy.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-14);

  Instance single = gen_instance(50, 1, 2, 0.5, WeightMode::kIdentity);
  ForwardState st1 = forward(single);
  CHECK(st1.S(0, 0) == 1.0);
  CHECK(st1.loss == doctest::Approx(
                        0.5 * (st1.Vy.row(0) - single.E.row(0)).squaredNorm()));

  // Self-consistent target annihilates the residual.
  GenOptions quiet;
  quiet.sigma = 0.0;
  Instance zr = gen_instance(51, 6, 2, 0.5, WeightMode::kRotary, quiet);
  CHECK(forward(zr).loss <= 1e-24);
}

TEST_CASE("softmax is invariant to positive rescaling of A") {
  Instance inst = gen_instance(52, 6, 2, 0.5, WeightMode::kRotary);
  ForwardState st = forward(inst);
  Mat scaled = normalize_rows(Mat(7.3 * st.A));
  CHECK((scaled - st.S).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("forward refuses overflowing logits") {
  // Hand-built instance skipping validate(): exp would overflow.
  Instance hot;
  hot.n = 2;
  hot.d = 1;
  hot.B = 1.0;
  hot.A1 = Mat::Constant(2, 1, 30.0);
  hot.A2 = Mat::Constant(2, 1, 30.0);
  hot.A3 = Mat::Constant(2, 1, 0.0);
  hot.X1 = Mat::Constant(1, 1, 1.0);
  hot.X2 = Mat::Constant(1, 1, 1.0);
  hot.Y = Mat::Constant(1, 1, 0.0);
  hot.E = Mat::Zero(2, 1);
  hot.weights = RopeWeights::identity(2, 1);
  CHECK_THROWS_AS(forward(hot), BoundError);
}

TEST_CASE("instance bound validation") {
  Instance inst = gen_instance(53, 4, 2, 0.5, WeightMode::kRotary);
  CHECK_NOTHROW(inst.validate());
  Instance bad = inst;
  bad.X1 *= 100.0;
  CHECK_THROWS_AS(bad.validate(), BoundError);
  Instance huge = inst;
  huge.B = 10.0;  // c_S B^2 = 200 > 40
  CHECK_THROWS_AS(huge.validate(), BoundError);
  Instance nan = inst;
  nan.Y(0, 0) = std::nan("");
  CHECK_THROWS_AS(nan.validate(), BoundError);
}

TEST_CASE("tilde A block reproduces attention rows") {
  Instance inst = gen_instance(54, 4, 2, 0.5, WeightMode::kRotary);
  ForwardState st = forward(inst);
  Vec x = vec(kron(inst.X1, inst.X2));
  for (Index j0 = 0; j0 < 4; ++j0) {
    Mat block = build_tilde_A_block(inst, j0);
    Vec row = (block * x).array().exp();
    CHECK((row.transpose() - st.A.row(j0)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(((block * Vec::Zero(x.size())).array().exp() - 1.0).abs().maxCoeff() ==
          0.0);
  }

  // n = 2, d = 1, identity weights: the block is [A1_{j0} A2_1; A1_{j0} A2_2].
  Instance tiny = gen_instance(55, 2, 1, 0.5, WeightMode::kIdentity);
  Mat b0 = build_tilde_A_block(tiny, 0);
  CHECK(b0(0, 0) == doctest::Approx(tiny.A1(0, 0) * tiny.A2(0, 0)).epsilon(1e-15));
  CHECK(b0(1, 0) == doctest::Approx(tiny.A1(0, 0) * tiny.A2(1, 0)).epsilon(1e-15));

  // 520^2 * 4^4 just clears the 2^26 materialization guard.
  Instance big = gen_instance(56, 520, 4, 0.5, WeightMode::kRotary);
  CHECK_THROWS_AS(build_tilde_A_block(big, 0), SizeGuardError);
}

TEST_CASE("instance JSON round-trip and loader diagnostics") {
  for (WeightMode mode : {WeightMode::kIdentity, WeightMode::kRotary}) {
    Instance inst = gen_instance(57, 5, 2, 0.5, mode);
    std::stringstream ss;
    save_instance(inst, ss);
    Instance back = load_instance(ss);
    CHECK(back.n == inst.n);
    CHECK(back.d == inst.d);
    CHECK((back.A1 - inst.A1).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((back.E - inst.E).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(back.weights.mode() == mode);
  }

  // General mode round-trips its table.
  Instance g;
  g.n = 2;
  g.d = 2;
  g.B = 0.5;
  g.A1 = Mat::Constant(2, 2, 0.1);
  g.A2 = Mat::Constant(2, 2, 0.1);
  g.A3 = Mat::Constant(2, 2, 0.1);
  g.X1 = Mat::Identity(2, 2) * 0.1;
  g.X2 = Mat::Identity(2, 2) * 0.1;
  g.Y = Mat::Identity(2, 2) * 0.1;
  g.E = Mat::Zero(2, 2);
  g.weights = RopeWeights::general(
      2, 2, {{0, {{0, 0, 1.0}, {1, 1, 1.0}}}, {1, {{0, 1, -0.5}}}});
  g.validate();
  std::stringstream ss;
  save_instance(g, ss);
  Instance gb = load_instance(ss);
  CHECK(gb.weights.mode() == WeightMode::kGeneral);
  CHECK((gb.weights.matrix(1) - g.weights.matrix(1)).cwiseAbs().maxCoeff() <=
        1e-15);

  std::stringstream bad("{\"n\": 2}");
  CHECK_THROWS_AS(load_instance(bad), ConfigError);
  std::stringstream junk("not json");
  CHECK_THROWS_AS(load_instance(junk), ConfigError);
}
