// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "ropegrad/exact_grad.hpp"
#include "ropegrad/generator.hpp"
#include "ropegrad/lowrank_grad.hpp"
#include "ropegrad/poly_exp.hpp"
#include "ropegrad/rope_model.hpp"
#include "ropegrad/spectral.hpp"
#include "ropegrad/tensor_ops.hpp"

namespace ropegrad {

double loglog_slope(const std::vector<double>& ns, const std::vector<double>& ts) {
  const size_t m = ns.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < m; ++i) {
    const double x = std::log(ns[i]), y = std::log(ts[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = m * sxx - sx * sx;
  return (m * sxy - sx * sy) / denom;
}

namespace {

struct CheckCtx {
  std::uint64_t seed;
  double tol;           // resolved tolerance for this check
  std::ostringstream detail;
};

Mat random_mat(CounterRng& rng, Index r, Index c, double lo, double hi) {
  Mat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// --- 1. Algebraic identity suite -------------------------------------------

bool check_algebra(CheckCtx& ctx) {
  CounterRng rng(ctx.seed);
  double worst_tt = 0.0, worst_rk = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.unit() * 15);  // <= 16
    const Index d = 1 + static_cast<Index>(rng.unit() * 4);   // <= 4
    Mat a1 = random_mat(rng, n, d, -1, 1);
    Mat a2 = random_mat(rng, n, d, -1, 1);
    Mat x = random_mat(rng, d, d, -1, 1);
    Vec lhs = tensor_trick(a1, x, a2);
    Vec rhs = kron(a1, a2) * vec(x);
    worst_tt = std::max(worst_tt, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.unit() * 15);
    const Index k1 = 1 + static_cast<Index>(rng.unit() * 4);
    const Index k2 = 1 + static_cast<Index>(rng.unit() * 4);
    Mat u1 = random_mat(rng, n, k1, -1, 1), v1 = random_mat(rng, n, k1, -1, 1);
    Mat u2 = random_mat(rng, n, k2, -1, 1), v2 = random_mat(rng, n, k2, -1, 1);
    Mat lhs = hadamard(u1 * v1.transpose(), u2 * v2.transpose());
    Mat rhs = rowwise_kron(u1, u2) * rowwise_kron(v1, v2).transpose();
    worst_rk = std::max(worst_rk, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  ctx.detail << "tensor-trick max err " << worst_tt << ", row-wise-kron max err "
             << worst_rk << " (tol " << ctx.tol << ")";
  return worst_tt <= ctx.tol && worst_rk <= ctx.tol;
}

// --- 2. Gradient cross-oracle ----------------------------------------------

bool check_cross_oracle(CheckCtx& ctx) {
  const Index ns[] = {2, 4, 8};
  const Index ds[] = {2, 4};
  const WeightMode modes[] = {WeightMode::kIdentity, WeightMode::kRotary};
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Index n = ns[k % 3];
    const Index d = ds[(k / 3) % 2];
    const WeightMode mode = modes[(k / 6) % 2];
    Instance inst = gen_instance(ctx.seed + k, n, d, 0.5, mode);
    Vec g = exact_gradient(inst).g;
    Vec oracle = gradient_oracle_all(inst);
    worst = std::max(worst, (g - oracle).cwiseAbs().maxCoeff());
  }
  ctx.detail << "max linf(exact - entry oracle) " << worst << " over 20 instances "
             << "(tol " << ctx.tol << ")";
  return worst <= ctx.tol;
}

// --- 3. Finite differences --------------------------------------------------

bool check_finite_diff(CheckCtx& ctx) {
  const Index ns[] = {2, 4, 8};
  const WeightMode modes[] = {WeightMode::kIdentity, WeightMode::kRotary};
  const double h = 1e-5;
  double worst = 0.0, worst_chain = 0.0;
  for (int k = 0; k < 10; ++k) {
    const Index n = ns[k % 3];
    const Index d = 2;
    Instance inst = gen_instance(ctx.seed + 100 + k, n, d, 0.5, modes[k % 2]);
    Vec g = exact_gradient(inst).g;
    Vec fd = finite_diff_gradient(inst, h);
    const double denom = std::max(g.cwiseAbs().maxCoeff(), 1e-12);
    worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / denom);

    auto [g1, g2] = chain_to_factors(g, inst.X1, inst.X2);
    Mat fd1(d, d), fd2(d, d);
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b) {
        Instance p = inst, m = inst;
        p.X1(a, b) += h;
        m.X1(a, b) -= h;
        fd1(a, b) = (forward(p).loss - forward(m).loss) / (2 * h);
        p = inst;
        m = inst;
        p.X2(a, b) += h;
        m.X2(a, b) -= h;
        fd2(a, b) = (forward(p).loss - forward(m).loss) / (2 * h);
      }
    const double dn1 = std::max(g1.cwiseAbs().maxCoeff(), 1e-12);
    const double dn2 = std::max(g2.cwiseAbs().maxCoeff(), 1e-12);
    worst_chain = std::max(worst_chain, (g1 - fd1).cwiseAbs().maxCoeff() / dn1);
    worst_chain = std::max(worst_chain, (g2 - fd2).cwiseAbs().maxCoeff() / dn2);
  }
  ctx.detail << "rel err vs central differences: gradient " << worst
             << ", factor gradients " << worst_chain << " (tol " << ctx.tol << ")";
  return worst <= ctx.tol && worst_chain <= ctx.tol;
}

// --- 4. Polynomial exp -------------------------------------------------------

bool check_poly(CheckCtx& ctx) {
  bool ok = true;
  for (double b : {1.0, 2.0, 4.0}) {
    int deg_coarse = -1, deg_fine = -1;
    for (double eps : {1e-2, 1e-4}) {
      PolyApprox p = build_poly(0.0, b, eps);
      ctx.detail << "[0," << b << "] eps " << eps << ": degree " << p.degree
                 << " certified " << p.certified_err << "; ";
      ok = ok && p.certified_err <= eps;
      (eps == 1e-2 ? deg_coarse : deg_fine) = p.degree;
    }
    ok = ok && deg_fine >= deg_coarse;
  }
  return ok;
}

// --- 5. Low-rank forward fidelity -------------------------------------------

bool check_lowrank_fidelity(CheckCtx& ctx) {
  Instance inst = gen_instance(ctx.seed + 500, 256, 4, 0.5, WeightMode::kRotary);
  const double shift = inst.logit_bound();
  PolyApprox poly = build_poly(0.0, 2.0 * shift, 1e-4);
  TrigFeatures feat = trig_features(inst, shift);
  LowRankFactors f1 = lift_and_factor_A(feat, poly, 1e-4, 1 << 16);
  ForwardState st = forward(inst);
  const double err = (f1.dense() - st.S).cwiseAbs().maxCoeff();
  ctx.detail << "n=256 d=4 eps=1e-4: degree " << poly.degree << ", rank "
             << f1.rank() << ", |U1 V1^T - S|_inf = " << err << " (tol "
             << ctx.tol << ")";
  return err <= ctx.tol;
}

// --- 6. Contraction equivalence ---------------------------------------------

Instance contraction_instance(CounterRng& rng, Index n, Index d, int mode_sel) {
  Instance inst;
  inst.n = n;
  inst.d = d;
  inst.B = 1.0;
  inst.A1 = random_mat(rng, n, d, -1, 1);
  inst.A2 = random_mat(rng, n, d, -1, 1);
  inst.A3 = Mat::Zero(n, d);
  inst.X1 = Mat::Zero(d, d);
  inst.X2 = Mat::Zero(d, d);
  inst.Y = Mat::Zero(d, d);
  inst.E = Mat::Zero(n, d);
  if (mode_sel == 0) {
    inst.weights = RopeWeights::identity(n, d);
  } else if (mode_sel == 1) {
    inst.weights = RopeWeights::rotary(n, d, 100.0);
  } else {
    std::vector<std::pair<Index, std::vector<WeightEntry>>> table;
    for (Index t = -(n - 1); t <= n - 1; ++t) {
      std::vector<WeightEntry> entries;
      for (Index r = 0; r < d; ++r) {
        const Index c = static_cast<Index>(rng.unit() * d) % d;
        entries.push_back({r, c, rng.uniform(-1, 1)});
      }
      table.emplace_back(t, std::move(entries));
    }
    inst.weights = RopeWeights::general(n, d, std::move(table));
  }
  return inst;
}

bool check_contraction(CheckCtx& ctx) {
  CounterRng rng(ctx.seed + 600);
  double worst = 0.0;
  const Index sizes[] = {8, 16, 32, 64};
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = sizes[trial % 4];
    const Index d = 2;
    const Index rank = 1 + static_cast<Index>(rng.unit() * 8);
    Instance inst = contraction_instance(rng, n, d, trial % 3);
    LowRankFactors fg;
    fg.U = random_mat(rng, n, rank, -1, 1);
    fg.V = random_mat(rng, n, rank, -1, 1);
    fg.target = FactorTarget::kGamma;
    Vec fast = fast_contract(inst, fg);
    Vec naive = naive_contract(inst, fg.dense());
    worst = std::max(worst, (fast - naive).cwiseAbs().maxCoeff());
  }
  ctx.detail << "max linf(fast - naive) " << worst << " over 10 factor sets "
             << "(tol " << ctx.tol << ")";
  return worst <= ctx.tol;
}

// --- 7. End-to-end approximate gradient -------------------------------------

bool check_end_to_end(CheckCtx& ctx) {
  Instance inst = gen_instance(ctx.seed + 700, 256, 4, 0.5, WeightMode::kRotary);
  Vec g_exact = exact_gradient(inst).g;
  FastOptions opts;
  opts.verify = FastOptions::Verify::kOff;
  FastGradientResult fine = fast_gradient(inst, 1e-4, opts);
  FastGradientResult coarse = fast_gradient(inst, 1e-2, opts);
  const double err_fine = (fine.g - g_exact).cwiseAbs().maxCoeff();
  const double err_coarse = (coarse.g - g_exact).cwiseAbs().maxCoeff();
  ctx.detail << "err(eps=1e-4) = " << err_fine << " (degree " << fine.degree
             << ", rank " << fine.gamma_rank << "), err(eps=1e-2) = "
             << err_coarse << " (degree " << coarse.degree << ") (tol "
             << ctx.tol << ")";
  return err_fine <= ctx.tol && err_coarse >= err_fine;
}

// --- 8. Scaling surrogate -----------------------------------------------------

bool check_scaling(CheckCtx& ctx) {
  const double B = 0.5, eps = 5e-2;
  const int kWarmup = 2, kReps = 5;
  FastOptions opts;
  opts.verify = FastOptions::Verify::kOff;
  opts.threads = 1;

  // Sweep the whole size list once per repetition (rather than repeating each
  // size back to back) so a transient load burst cannot bias a single point;
  // per-size medians over the timed sweeps are compared as usual.
  auto median_sweep = [&](const std::vector<Index>& sizes,
                          const std::function<void(const Instance&)>& fn) {
    std::vector<Instance> insts;
    insts.reserve(sizes.size());
    for (Index n : sizes)
      insts.push_back(gen_instance(ctx.seed + 800, n, 4, B, WeightMode::kRotary));
    std::vector<std::vector<double>> times(sizes.size());
    for (int rep = 0; rep < kWarmup + kReps; ++rep)
      for (size_t s = 0; s < sizes.size(); ++s) {
        const auto t0 = std::chrono::steady_clock::now();
        fn(insts[s]);
        const auto t1 = std::chrono::steady_clock::now();
        if (rep >= kWarmup)
          times[s].push_back(std::chrono::duration<double>(t1 - t0).count());
      }
    std::vector<double> medians;
    for (auto& ts : times) {
      std::sort(ts.begin(), ts.end());
      medians.push_back(ts[ts.size() / 2]);
    }
    return medians;
  };

  const std::vector<Index> fast_sizes = {512, 1024, 2048, 4096, 8192};
  int degree = -1;
  Index rank = -1;
  std::vector<double> fast_ts = median_sweep(fast_sizes, [&](const Instance& inst) {
    FastGradientResult r = fast_gradient(inst, eps, opts);
    degree = r.degree;
    rank = r.gamma_rank;
  });
  std::vector<double> fast_ns(fast_sizes.begin(), fast_sizes.end());
  const double fast_slope = loglog_slope(fast_ns, fast_ts);

  const std::vector<Index> exact_sizes = {512, 1024, 2048};
  std::vector<double> ex_ts = median_sweep(
      exact_sizes, [&](const Instance& inst) { exact_gradient(inst); });
  std::vector<double> ex_ns(exact_sizes.begin(), exact_sizes.end());
  const double exact_slope = loglog_slope(ex_ns, ex_ts);

  ctx.detail << "fast slope " << fast_slope << " (<= 1.35, degree " << degree
             << ", rank " << rank << ", t(8192) = " << fast_ts.back()
             << " s), exact slope " << exact_slope << " (>= 1.7, t(2048) = "
             << ex_ts.back() << " s)";
  return fast_slope <= 1.35 && exact_slope >= 1.7;
}

// --- 9. Degeneracy suite -------------------------------------------------------

bool check_degeneracy(CheckCtx& ctx) {
  bool ok = true;
  // Single token: softmax of one element is constant, gradient vanishes.
  Instance one = gen_instance(ctx.seed + 900, 1, 2, 0.5, WeightMode::kIdentity);
  const double g_one = exact_gradient(one).g.cwiseAbs().maxCoeff();
  ok = ok && g_one <= 1e-15;

  // Zero residual: E built from the exact output.
  GenOptions noiseless;
  noiseless.sigma = 0.0;
  Instance zr =
      gen_instance(ctx.seed + 901, 16, 4, 0.5, WeightMode::kRotary, noiseless);
  const double g_zero = exact_gradient(zr).g.cwiseAbs().maxCoeff();
  ok = ok && g_zero < ctx.tol;
  FastOptions opts;
  opts.verify = FastOptions::Verify::kOff;
  const double g_fast = fast_gradient(zr, 1e-4, opts).g.cwiseAbs().maxCoeff();
  ok = ok && g_fast <= 1e-2;

  // Zero weights: uniform softmax rows.
  Instance flat = gen_instance(ctx.seed + 902, 16, 4, 0.5, WeightMode::kRotary);
  flat.X1.setZero();
  flat.X2.setZero();
  ForwardState st = forward(flat);
  const double uni =
      (st.S.array() - 1.0 / static_cast<double>(flat.n)).abs().maxCoeff();
  ok = ok && uni <= 1e-12;

  ctx.detail << "n=1 |g|_inf " << g_one << "; zero-residual |g|_inf " << g_zero
             << " (tol " << ctx.tol << "), fast " << g_fast
             << "; uniform softmax dev " << uni;
  return ok;
}

// --- 10. FFT suite -------------------------------------------------------------

bool check_fft(CheckCtx& ctx) {
  CounterRng rng(ctx.seed + 1000);
  bool ok = true;
  double worst_rt = 0.0, worst_pars = 0.0, worst_corr = 0.0;
  for (Index len : {16, 256, 1024}) {
    ComplexBuffer buf;
    buf.re = random_mat(rng, len, 1, -1, 1).col(0);
    buf.im = random_mat(rng, len, 1, -1, 1).col(0);
    ComplexBuffer rt = fft(fft(buf, false), true);
    const double scale = std::max(buf.re.cwiseAbs().maxCoeff(),
                                  buf.im.cwiseAbs().maxCoeff());
    worst_rt = std::max(worst_rt,
                        std::max((rt.re - buf.re).cwiseAbs().maxCoeff(),
                                 (rt.im - buf.im).cwiseAbs().maxCoeff()) /
                            scale);
    ComplexBuffer sp = fft(buf, false);
    const double t_norm = buf.re.squaredNorm() + buf.im.squaredNorm();
    const double f_norm = sp.re.squaredNorm() + sp.im.squaredNorm();
    worst_pars = std::max(worst_pars,
                          std::abs(f_norm - len * t_norm) / (len * t_norm));
  }
  for (Index len : {4, 64, 256, 1024}) {
    Vec x = random_mat(rng, len, 1, -1, 1).col(0);
    Vec y = random_mat(rng, len, 1, -1, 1).col(0);
    Vec fastc = correlate_all_lags(x, y);
    Vec naive = Vec::Zero(2 * len - 1);
    for (Index t = -(len - 1); t <= len - 1; ++t)
      for (Index i = std::max<Index>(0, -t); i < std::min(len, len - t); ++i)
        naive(t + len - 1) += x(i + t) * y(i);
    worst_corr = std::max(worst_corr, (fastc - naive).cwiseAbs().maxCoeff());
  }
  ok = worst_rt <= 1e-12 && worst_pars <= 1e-10 && worst_corr <= ctx.tol;
  ctx.detail << "round-trip rel " << worst_rt << ", Parseval rel " << worst_pars
             << ", correlation vs naive " << worst_corr << " (tol " << ctx.tol
             << ")";
  return ok;
}

struct CheckDef {
  const char* id;
  const char* name;
  double default_tol;
  double budget_seconds;
  bool (*fn)(CheckCtx&);
};

const CheckDef kChecks[] = {
    {"1", "algebraic-identities", 1e-12, 5.0, check_algebra},
    {"2", "gradient-cross-oracle", 1e-10, 30.0, check_cross_oracle},
    {"3", "finite-difference", 1e-5, 60.0, check_finite_diff},
    {"4", "polynomial-exp", 0.0, 5.0, check_poly},
    {"5", "lowrank-forward-fidelity", 1e-3, 60.0, check_lowrank_fidelity},
    {"6", "contraction-equivalence", 1e-9, 30.0, check_contraction},
    {"7", "end-to-end-approx-gradient", 1e-2, 120.0, check_end_to_end},
    {"8", "scaling-surrogate", 0.0, 600.0, check_scaling},
    {"9", "degeneracy-suite", 1e-12, 5.0, check_degeneracy},
    {"10", "fft-suite", 1e-10, 5.0, check_fft},
};

}  // namespace

std::vector<CheckResult> run_verify(const VerifyConfig& cfg, std::ostream& log) {
  std::vector<CheckResult> results;
  for (const auto& def : kChecks) {
    if (!cfg.only.empty() &&
        std::find(cfg.only.begin(), cfg.only.end(), def.id) == cfg.only.end())
      continue;
    CheckCtx ctx;
    ctx.seed = cfg.seed;
    ctx.tol = def.default_tol;
    if (auto it = cfg.tolerance.find(def.id); it != cfg.tolerance.end())
      ctx.tol = it->second;
    CheckResult r;
    r.id = def.id;
    r.name = def.name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.passed = def.fn(ctx);
    } catch (const std::exception& e) {
      r.passed = false;
      ctx.detail << "exception: " << e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
    if (r.seconds >= def.budget_seconds) {
      r.passed = false;
      ctx.detail << " [over budget " << def.budget_seconds << " s]";
    }
    r.detail = ctx.detail.str();
    log << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name
        << " (" << r.seconds << " s): " << r.detail << "\n";
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace ropegrad
