// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/lowrank_grad.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "ropegrad/errors.hpp"
#include "ropegrad/exact_grad.hpp"
#include "ropegrad/parallel.hpp"
#include "ropegrad/spectral.hpp"
#include "ropegrad/tensor_ops.hpp"

namespace ropegrad {

TrigFeatures trig_features(const Instance& inst, double shift) {
  const Index n = inst.n, d = inst.d;
  const WeightMode mode = inst.weights.mode();
  if (mode == WeightMode::kGeneral)
    throw UnsupportedError(
        "trig_features: no fast path for general weight tables; use the exact "
        "path");
  if (!(shift >= 0.0) || !std::isfinite(shift))
    throw ConfigError("trig_features: shift must be finite and >= 0");

  Mat Q(n, d), K(n, d);
  for (Index j = 0; j < n; ++j) Q.row(j) = inst.A1.row(j) * inst.X1;
  for (Index i = 0; i < n; ++i) K.row(i) = inst.A2.row(i) * inst.X2;
  const double inv_d = 1.0 / static_cast<double>(d);

  TrigFeatures feat;
  feat.shift = shift;
  if (mode == WeightMode::kIdentity) {
    feat.Phi.resize(n, d + 1);
    feat.Psi.resize(n, d + 1);
    feat.Phi.leftCols(d) = Q * inv_d;
    feat.Psi.leftCols(d) = K;
    feat.Phi.col(d).setConstant(shift);
    feat.Psi.col(d).setOnes();
  } else {
    // Per block b: cos((j0-i) theta) and sin((j0-i) theta) split by angle
    // addition into products of absolute-position cosines/sines.
    feat.Phi.resize(n, 2 * d + 1);
    feat.Psi.resize(n, 2 * d + 1);
    std::vector<double> thetas(static_cast<size_t>(d / 2));
    for (Index b = 0; b < d / 2; ++b)
      thetas[static_cast<size_t>(b)] =
          std::pow(inst.weights.base(),
                   -2.0 * static_cast<double>(b) / static_cast<double>(d));
    for (Index j = 0; j < n; ++j) {
      for (Index b = 0; b < d / 2; ++b) {
        const double ang = static_cast<double>(j) * thetas[static_cast<size_t>(b)];
        const double cj = std::cos(ang), sj = std::sin(ang);
        const double q1 = Q(j, 2 * b), q2 = Q(j, 2 * b + 1);
        const double k1 = K(j, 2 * b), k2 = K(j, 2 * b + 1);
        feat.Phi(j, 4 * b + 0) = q1 * cj * inv_d;
        feat.Phi(j, 4 * b + 1) = q1 * sj * inv_d;
        feat.Phi(j, 4 * b + 2) = q2 * cj * inv_d;
        feat.Phi(j, 4 * b + 3) = q2 * sj * inv_d;
        const double kt1 = k1 * cj + k2 * sj;   // rotated key coordinates
        const double kt2 = -k1 * sj + k2 * cj;
        feat.Psi(j, 4 * b + 0) = kt1;
        feat.Psi(j, 4 * b + 1) = -kt2;
        feat.Psi(j, 4 * b + 2) = kt2;
        feat.Psi(j, 4 * b + 3) = kt1;
      }
      feat.Phi(j, 2 * d) = shift;
      feat.Psi(j, 2 * d) = 1.0;
    }
  }

  // Sampled invariant check against the direct logit.
  const Index samples = std::min<Index>(n * n, 16);
  for (Index s = 0; s < samples; ++s) {
    const Index j0 = (s * 7919 + 13) % n;
    const Index i = (s * 104729 + 7) % n;
    const double got = feat.Phi.row(j0).dot(feat.Psi.row(i));
    const double want = logit(inst, j0, i) + shift;
    if (std::abs(got - want) > 1e-9 * std::max(1.0, std::abs(want)))
      throw Error("trig_features: separability check failed at (" +
                  std::to_string(j0) + ", " + std::to_string(i) + ")");
  }
  return feat;
}

namespace {

Index binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  Index r = 1;
  for (Index i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Enumerates every multiset of {0, .., f-1} with size <= g in a fixed
// depth-first order, invoking fn with a sorted index list. The order is
// shared by the U and V columns.
template <typename Fn>
void for_each_multiset(Index f, int g, Fn&& fn) {
  std::vector<Index> ms;
  fn(ms);  // empty multiset (degree-0 term)
  std::function<void(Index, int)> rec = [&](Index lo, int remaining) {
    if (remaining == 0) return;
    for (Index l = lo; l < f; ++l) {
      ms.push_back(l);
      fn(ms);
      rec(l, remaining - 1);
      ms.pop_back();
    }
  };
  rec(0, g);
}

double multinomial(const std::vector<Index>& ms) {
  double r = 1.0;
  Index run = 1;
  double fact_run = 1.0;
  for (size_t i = 1; i <= ms.size(); ++i) {
    r *= static_cast<double>(i);
    if (i < ms.size() && ms[i] == ms[i - 1]) {
      ++run;
      fact_run *= static_cast<double>(run);
    } else {
      r /= fact_run;
      run = 1;
      fact_run = 1.0;
    }
  }
  return r;
}

}  // namespace

LowRankFactors lift_and_factor_A(const TrigFeatures& feat, const PolyApprox& poly,
                                 double eps_tag, Index k_cap) {
  const Index n = feat.Phi.rows();
  const Index f = feat.Phi.cols();
  const int g = poly.degree;
  if (poly.lo > 1e-12 || poly.hi < 2.0 * feat.shift - 1e-12 * (1.0 + feat.shift))
    throw ConfigError(
        "lift_and_factor_A: polynomial must cover [0, 2 * shift]");
  const Index k1 = binomial(f + g, g);
  if (k1 > k_cap)
    throw RankBudgetError("lift rank " + std::to_string(k1) +
                          " exceeds k_cap = " + std::to_string(k_cap) +
                          "; use a smaller d or a larger eps");

  Mat ua(n, k1), va(n, k1);
  Index col = 0;
  Vec pu(n), pv(n);
  for_each_multiset(f, g, [&](const std::vector<Index>& ms) {
    pu.setOnes();
    pv.setOnes();
    for (Index l : ms) {
      pu.array() *= feat.Phi.col(l).array();
      pv.array() *= feat.Psi.col(l).array();
    }
    const double coeff = poly.coeffs(static_cast<Index>(ms.size()));
    const double w = std::sqrt(std::abs(coeff) * multinomial(ms));
    const double sgn = coeff < 0.0 ? -1.0 : 1.0;
    ua.col(col) = sgn * w * pu;
    va.col(col) = w * pv;
    ++col;
  });
  if (col != k1) throw Error("lift_and_factor_A: multiset enumeration mismatch");

  // Row-normalize: rowsum_j = U_{j,*} (V^T 1_n).
  Vec colsum = va.colwise().sum().transpose();
  Vec rowsum = ua * colsum;
  if ((rowsum.array() <= 0.0).any())
    throw ApproxError(
        "lift_and_factor_A: nonpositive approximate row sum; polynomial too "
        "coarse",
        rowsum.minCoeff());
  LowRankFactors out;
  out.U = ua.array().colwise() / rowsum.array();
  out.V = std::move(va);
  out.target = FactorTarget::kS;
  out.eps_tag = eps_tag;
  return out;
}

Mat approx_c(const LowRankFactors& s_factors, const Mat& vy, const Mat& e) {
  if (s_factors.U.rows() != vy.rows() || vy.rows() != e.rows() ||
      vy.cols() != e.cols())
    throw ShapeError("approx_c: inconsistent shapes");
  return s_factors.U * (s_factors.V.transpose() * vy) - e;
}

LowRankFactors approx_beta_factors(const LowRankFactors& s_factors,
                                   const Mat& vy, const Mat& e) {
  LowRankFactors out;
  out.U = approx_c(s_factors, vy, e);
  out.V = vy;
  out.target = FactorTarget::kBeta;
  out.eps_tag = s_factors.eps_tag;
  return out;
}

LowRankFactors gamma1_factors(const LowRankFactors& s_factors,
                              const LowRankFactors& beta_factors,
                              Index k_cap) {
  const Index k3 = s_factors.rank() * beta_factors.rank();
  if (k3 > k_cap)
    throw RankBudgetError("gamma1 rank " + std::to_string(k3) +
                          " exceeds k_cap = " + std::to_string(k_cap));
  LowRankFactors out;
  out.U = rowwise_kron(s_factors.U, beta_factors.U);
  out.V = rowwise_kron(s_factors.V, beta_factors.V);
  out.target = FactorTarget::kGamma1;
  out.eps_tag = s_factors.eps_tag;
  return out;
}

LowRankFactors gamma2_factors(const LowRankFactors& s_factors,
                              const LowRankFactors& beta_factors) {
  const Mat m = s_factors.V.transpose() * beta_factors.V;  // k1 x k2
  const Index n = s_factors.U.rows();
  Vec r(n);
  for (Index j = 0; j < n; ++j)
    r(j) = (s_factors.U.row(j) * m).dot(beta_factors.U.row(j));
  LowRankFactors out;
  out.U = r.asDiagonal() * s_factors.U;
  out.V = s_factors.V;
  out.target = FactorTarget::kGamma2;
  out.eps_tag = s_factors.eps_tag;
  return out;
}

LowRankFactors gamma_factors(const LowRankFactors& g1, const LowRankFactors& g2) {
  if (g1.U.rows() != g2.U.rows())
    throw ShapeError("gamma_factors: row counts differ");
  LowRankFactors out;
  out.U.resize(g1.U.rows(), g1.rank() + g2.rank());
  out.V.resize(g1.V.rows(), g1.rank() + g2.rank());
  out.U << g1.U, -g2.U;
  out.V << g1.V, g2.V;
  out.target = FactorTarget::kGamma;
  out.eps_tag = g1.eps_tag;
  return out;
}

Vec fast_contract(const Instance& inst, const LowRankFactors& gamma,
                  int threads) {
  const Index n = inst.n, d = inst.d;
  if (gamma.U.rows() != n || gamma.V.rows() != n)
    throw ShapeError("fast_contract: factor rows must equal n");
  const Index k = gamma.rank();
  const Index d2 = d * d;
  const Index m = next_pow2(2 * n);
  const Fft plan(m);
  const int nthreads = threads > 0 ? threads : env_thread_count();

  // Accumulate the spectral products over the rank columns, then invert once
  // per coordinate pair: sum_l IFFT(FU_{l,a} * FV_{l,c}) = IFFT(sum_l ...).
  // Everything stays in the bit-reversed order of the scrambled transforms;
  // pointwise products never care about the ordering.
  struct Spectra {
    Mat re, im;  // d2 x m
    void init(Index d2_, Index m_) {
      re = Mat::Zero(d2_, m_);
      im = Mat::Zero(d2_, m_);
    }
  };

  // Transposed copies make every per-column gather contiguous.
  const Mat ut = gamma.U.transpose();
  const Mat vt = gamma.V.transpose();
  const Mat a1t = inst.A1.transpose();
  const Mat a2t = inst.A2.transpose();

  // Packs two real sequences into one complex scrambled transform and unpacks
  // the two spectra through conjugate symmetry, halving the forward FFT
  // count. In bit-reversed order the conjugate partner of position p is the
  // mirror inside its dyadic block [2^s, 2^{s+1}), so the unpack walk stays
  // local.
  auto packed_spectra = [&](const Mat& rows, Mat& out_re, Mat& out_im,
                            Mat& zr, Mat& zi) {
    const Index rows_n = rows.rows();
    for (Index a = 0; a < rows_n; a += 2) {
      const bool has_pair = a + 1 < rows_n;
      zr.row(0).setZero();
      zi.row(0).setZero();
      zr.row(0).head(n) = rows.row(a);
      if (has_pair) zi.row(0).head(n) = rows.row(a + 1);
      plan.forward_scrambled(zr.row(0).data(), zi.row(0).data());
      auto unpack = [&](Index p, Index q) {  // q = conjugate partner of p
        out_re(a, p) = 0.5 * (zr(0, p) + zr(0, q));
        out_im(a, p) = 0.5 * (zi(0, p) - zi(0, q));
        if (has_pair) {
          out_re(a + 1, p) = 0.5 * (zi(0, p) + zi(0, q));
          out_im(a + 1, p) = 0.5 * (zr(0, q) - zr(0, p));
        }
      };
      unpack(0, 0);
      if (m > 1) unpack(1, 1);
      for (Index block = 2; block < m; block <<= 1)
        for (Index p = block; p < 2 * block; ++p)
          unpack(p, 3 * block - 1 - p);
    }
  };

  auto run_chunk = [&](Index l_begin, Index l_end, Spectra& acc) {
    Mat useq(d, n), vseq(d, n);
    Mat fur(d, m), fui(d, m), fvr(d, m), fvi(d, m);
    Mat zr(1, m), zi(1, m);
    for (Index l = l_begin; l < l_end; ++l) {
      for (Index a = 0; a < d; ++a)
        useq.row(a) = ut.row(l).array() * a1t.row(a).array();
      for (Index c = 0; c < d; ++c)
        for (Index i = 0; i < n; ++i)
          vseq(c, n - 1 - i) = vt(l, i) * a2t(c, i);
      packed_spectra(useq, fur, fui, zr, zi);
      packed_spectra(vseq, fvr, fvi, zr, zi);
      for (Index a = 0; a < d; ++a)
        for (Index c = 0; c < d; ++c) {
          const double* xr = fur.row(a).data();
          const double* xi = fui.row(a).data();
          const double* yr = fvr.row(c).data();
          const double* yi = fvi.row(c).data();
          double* ar = acc.re.row(a * d + c).data();
          double* ai = acc.im.row(a * d + c).data();
          for (Index w = 0; w < m; ++w) {
            ar[w] += xr[w] * yr[w] - xi[w] * yi[w];
            ai[w] += xr[w] * yi[w] + xi[w] * yr[w];
          }
        }
    }
  };

  // Fixed chunking with ordered commits: chunk boundaries and the order the
  // partial sums land in never depend on the thread count, so the result is
  // bit-identical for any ROPEGRAD_THREADS.
  Spectra total;
  total.init(d2, m);
  const Index chunk = 16;
  const Index n_chunks = (k + chunk - 1) / chunk;
  if (nthreads <= 1 || n_chunks <= 1) {
    Spectra local;
    for (Index c = 0; c < n_chunks; ++c) {
      local.init(d2, m);
      run_chunk(c * chunk, std::min(k, (c + 1) * chunk), local);
      total.re += local.re;
      total.im += local.im;
    }
  } else {
    std::atomic<Index> next_claim{0}, next_commit{0};
    auto worker = [&] {
      Spectra local;
      for (;;) {
        const Index c = next_claim.fetch_add(1);
        if (c >= n_chunks) return;
        local.init(d2, m);
        run_chunk(c * chunk, std::min(k, (c + 1) * chunk), local);
        while (next_commit.load() != c) std::this_thread::yield();
        total.re += local.re;
        total.im += local.im;
        next_commit.store(c + 1);
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i + 1 < nthreads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }

  // One inverse transform per coordinate pair gives all lag sums at once.
  Mat lag_sums(2 * n - 1, d2);
  Vec zr(m), zi(m);
  for (Index ac = 0; ac < d2; ++ac) {
    zr = total.re.row(ac).transpose();
    zi = total.im.row(ac).transpose();
    plan.inverse_scrambled(zr.data(), zi.data());
    lag_sums.col(ac) = zr.head(2 * n - 1);
  }

  Vec g = Vec::Zero(d2 * d2);
  const double inv_d = 1.0 / static_cast<double>(d);
  for (Index t = -(n - 1); t <= n - 1; ++t) {
    inst.weights.for_each_entry(t, [&](Index b, Index e, double w) {
      const double wv = w * inv_d;
      for (Index ac = 0; ac < d2; ++ac)
        g(ac * d2 + (b * d + e)) += lag_sums(t + n - 1, ac) * wv;
    });
  }
  return g;
}

Vec naive_contract(const Instance& inst, const Mat& gamma_dense) {
  const Index n = inst.n, d = inst.d;
  const Index d2 = d * d;
  const Index d4 = d2 * d2;
  if (gamma_dense.rows() != n || gamma_dense.cols() != n)
    throw ShapeError("naive_contract: gamma must be n x n");
  if (n * n * d4 > kTildeAGuard)
    throw SizeGuardError("naive_contract: n^2 d^4 exceeds guard");
  Vec g = Vec::Zero(d4);
  const double inv_d = 1.0 / static_cast<double>(d);
  for (Index j0 = 0; j0 < n; ++j0)
    for (Index i = 0; i < n; ++i) {
      const double coef = gamma_dense(j0, i) * inv_d;
      inst.weights.for_each_entry(j0 - i, [&](Index b, Index e, double w) {
        const double cw = coef * w;
        for (Index a = 0; a < d; ++a)
          for (Index c = 0; c < d; ++c)
            g((a * d + c) * d2 + (b * d + e)) +=
                cw * inst.A1(j0, a) * inst.A2(i, c);
      });
    }
  return g;
}

namespace {

// Reraises a stage failure with the failing stage named, keeping the type.
template <typename Fn>
auto run_stage(const char* name, Fn&& fn) -> decltype(fn()) {
  const auto tag = [&](const char* what) {
    return std::string("stage '") + name + "': " + what;
  };
  try {
    return fn();
  } catch (const RankBudgetError& e) {
    throw RankBudgetError(tag(e.what()));
  } catch (const ApproxError& e) {
    throw ApproxError(tag(e.what()), e.achieved_err);
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(tag(e.what()));
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e.what()));
  } catch (const Error& e) {
    throw Error(tag(e.what()));
  }
}

}  // namespace

FastGradientResult fast_gradient(const Instance& inst, double eps,
                                 const FastOptions& opts) {
  if (!(eps > 0.0 && eps < 0.1))
    throw ConfigError("fast_gradient: eps must lie in (0, 0.1)");
  using clock = std::chrono::steady_clock;
  auto tick = [](clock::time_point& t) {
    auto now = clock::now();
    auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now - t).count();
    t = now;
    return ns;
  };

  const bool verify =
      opts.verify == FastOptions::Verify::kOn ||
      (opts.verify == FastOptions::Verify::kAuto && inst.n <= 256);
  if (opts.verify == FastOptions::Verify::kOn && inst.n > 2048)
    throw ConfigError(
        "fast_gradient: dense verification refused above n = 2048");

  FastGradientResult res;
  res.shift = inst.logit_bound();
  auto t = clock::now();

  TrigFeatures feat =
      run_stage("features", [&] { return trig_features(inst, res.shift); });
  res.stage_ns["features"] = tick(t);

  PolyApprox poly =
      run_stage("poly", [&] { return build_poly(0.0, 2.0 * res.shift, eps); });
  res.degree = poly.degree;
  res.stage_ns["poly"] = tick(t);

  LowRankFactors f1 = run_stage(
      "lift", [&] { return lift_and_factor_A(feat, poly, eps, opts.k_cap); });
  res.lift_rank = f1.rank();
  res.stage_ns["lift"] = tick(t);

  const Mat vy = inst.A3 * inst.Y;
  LowRankFactors fb =
      run_stage("beta", [&] { return approx_beta_factors(f1, vy, inst.E); });
  res.stage_ns["beta"] = tick(t);

  LowRankFactors fg = run_stage("gamma", [&] {
    LowRankFactors g1 = gamma1_factors(f1, fb, opts.k_cap);
    LowRankFactors g2 = gamma2_factors(f1, fb);
    return gamma_factors(g1, g2);
  });
  res.gamma_rank = fg.rank();
  res.stage_ns["gamma"] = tick(t);

  res.g = run_stage("contract",
                    [&] { return fast_contract(inst, fg, opts.threads); });
  res.stage_ns["contract"] = tick(t);

  if (verify) {
    ForwardState st = forward(inst);
    Mat beta = compute_beta(st);
    Mat gamma = compute_gamma(st, beta);
    res.s_err = (f1.dense() - st.S).cwiseAbs().maxCoeff();
    res.beta_err = (fb.dense() - beta).cwiseAbs().maxCoeff();
    res.gamma_err = (fg.dense() - gamma).cwiseAbs().maxCoeff();
    Vec g_exact = assemble_gradient(inst, gamma);
    res.g_err = (res.g - g_exact).cwiseAbs().maxCoeff();
    res.stage_ns["verify"] = tick(t);
  }
  return res;
}

}  // namespace ropegrad
