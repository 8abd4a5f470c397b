// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/spectral.hpp"

#include <cmath>
#include <numbers>

#include <doctest.h>

#include "ropegrad/errors.hpp"
#include "ropegrad/generator.hpp"

using namespace ropegrad;

namespace {

Vec random_vec(CounterRng& rng, Index n) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.uniform(-1, 1);
  return v;
}

// O(n^2) DFT oracle.
ComplexBuffer naive_dft(const ComplexBuffer& in, bool inverse) {
  const Index n = in.len();
  ComplexBuffer out;
  out.re = Vec::Zero(n);
  out.im = Vec::Zero(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (Index k = 0; k < n; ++k)
    for (Index j = 0; j < n; ++j) {
      const double ang = sign * 2.0 * std::numbers::pi * k * j / n;
      const double c = std::cos(ang), s = std::sin(ang);
      out.re(k) += in.re(j) * c - in.im(j) * s;
      out.im(k) += in.re(j) * s + in.im(j) * c;
    }
  if (inverse) {
    out.re /= static_cast<double>(n);
    out.im /= static_cast<double>(n);
  }
  return out;
}

Vec naive_correlation(const Vec& x, const Vec& y) {
  const Index n = x.size();
  Vec out = Vec::Zero(2 * n - 1);
  for (Index t = -(n - 1); t <= n - 1; ++t)
    for (Index i = std::max<Index>(0, -t); i < std::min(n, n - t); ++i)
      out(t + n - 1) += x(i + t) * y(i);
  return out;
}

}  // namespace

TEST_CASE("fft of an impulse is flat") {
  ComplexBuffer buf;
  buf.re = Vec::Zero(4);
  buf.im = Vec::Zero(4);
  buf.re(0) = 1.0;
  ComplexBuffer sp = fft(buf, false);
  CHECK((sp.re - Vec::Ones(4)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(sp.im.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("fft of all-ones is DC only") {
  ComplexBuffer buf;
  buf.re = Vec::Ones(4);
  buf.im = Vec::Zero(4);
  ComplexBuffer sp = fft(buf, false);
  CHECK(sp.re(0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(sp.re.tail(3).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(sp.im.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("fft matches the naive DFT at length 16") {
  CounterRng rng(23);
  ComplexBuffer buf;
  buf.re = random_vec(rng, 16);
  buf.im = random_vec(rng, 16);
  for (bool inverse : {false, true}) {
    ComplexBuffer fast = fft(buf, inverse);
    ComplexBuffer slow = naive_dft(buf, inverse);
    CHECK((fast.re - slow.re).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((fast.im - slow.im).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("fft round-trip and Parseval") {
  CounterRng rng(29);
  for (Index len : {2, 8, 64, 512}) {
    ComplexBuffer buf;
    buf.re = random_vec(rng, len);
    buf.im = random_vec(rng, len);
    ComplexBuffer rt = fft(fft(buf, false), true);
    const double scale = buf.re.cwiseAbs().maxCoeff();
    CHECK((rt.re - buf.re).cwiseAbs().maxCoeff() / scale <= 1e-12);
    CHECK((rt.im - buf.im).cwiseAbs().maxCoeff() / scale <= 1e-12);

    ComplexBuffer sp = fft(buf, false);
    const double t_norm = buf.re.squaredNorm() + buf.im.squaredNorm();
    const double f_norm = sp.re.squaredNorm() + sp.im.squaredNorm();
    CHECK(std::abs(f_norm - len * t_norm) / (len * t_norm) <= 1e-10);
  }
}

TEST_CASE("scrambled transform pair round-trips and matches the plain DFT") {
  CounterRng rng(61);
  for (Index len : {4, 32, 256}) {
    Vec xr = random_vec(rng, len), xi = random_vec(rng, len);
    Fft plan(len);

    Vec sr = xr, si = xi;
    plan.forward_scrambled(sr.data(), si.data());
    // Scrambled output is the plain spectrum in bit-reversed positions;
    // check multiset equality through the inverse round trip.
    plan.inverse_scrambled(sr.data(), si.data());
    CHECK((sr - xr).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((si - xi).cwiseAbs().maxCoeff() <= 1e-12);
  }

  // Correlation through the scrambled path equals the definition.
  Vec x = random_vec(rng, 48), y = random_vec(rng, 48);
  Vec fast = correlate_all_lags(x, y);
  Vec slow = naive_correlation(x, y);
  CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("fft rejects non-power-of-two lengths") {
  ComplexBuffer buf;
  buf.re = Vec::Zero(6);
  buf.im = Vec::Zero(6);
  CHECK_THROWS_AS(fft(buf, false), ShapeError);
}

TEST_CASE("correlate_all_lags hand values") {
  Vec x(2), y(2);
  x << 1, 2;
  y << 1, 1;
  Vec got = correlate_all_lags(x, y);
  REQUIRE(got.size() == 3);
  CHECK(got(0) == doctest::Approx(1.0).epsilon(1e-14));  // lag -1
  CHECK(got(1) == doctest::Approx(3.0).epsilon(1e-14));  // lag 0
  CHECK(got(2) == doctest::Approx(2.0).epsilon(1e-14));  // lag 1

  Vec imp = Vec::Zero(4);
  imp(0) = 1.0;
  Vec self = correlate_all_lags(imp, imp);
  for (Index k = 0; k < self.size(); ++k)
    CHECK(self(k) == doctest::Approx(k == 3 ? 1.0 : 0.0).epsilon(1e-14));
}

TEST_CASE("correlate_all_lags matches the naive loop") {
  CounterRng rng(31);
  Vec x = random_vec(rng, 64), y = random_vec(rng, 64);
  Vec fast = correlate_all_lags(x, y);
  Vec slow = naive_correlation(x, y);
  CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK_THROWS_AS(correlate_all_lags(x, random_vec(rng, 32)), ShapeError);
}

TEST_CASE("correlation linearity and reflection symmetry") {
  CounterRng rng(37);
  const Index n = 32;
  Vec x = random_vec(rng, n), y = random_vec(rng, n), z = random_vec(rng, n);
  const double alpha = 0.73;
  Vec lhs = correlate_all_lags(x, Vec(alpha * y + z));
  Vec rhs = alpha * correlate_all_lags(x, y) + correlate_all_lags(x, z);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);

  Vec xy = correlate_all_lags(x, y);
  Vec yx = correlate_all_lags(y, x);
  for (Index t = -(n - 1); t <= n - 1; ++t)
    CHECK(xy(t + n - 1) == doctest::Approx(yx(-t + n - 1)).epsilon(1e-12));
}
