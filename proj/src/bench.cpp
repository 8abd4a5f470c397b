// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <locale>
#include <sstream>

#include "ropegrad/errors.hpp"
#include "ropegrad/exact_grad.hpp"
#include "ropegrad/generator.hpp"
#include "ropegrad/lowrank_grad.hpp"
#include "ropegrad/parallel.hpp"
#include "ropegrad/verify.hpp"

namespace ropegrad {

std::string mode_name(WeightMode mode) {
  switch (mode) {
    case WeightMode::kIdentity:
      return "identity";
    case WeightMode::kRotary:
      return "rotary";
    case WeightMode::kGeneral:
      return "general";
  }
  return "?";
}

WeightMode parse_mode(const std::string& name) {
  if (name == "identity") return WeightMode::kIdentity;
  if (name == "rotary") return WeightMode::kRotary;
  if (name == "general") return WeightMode::kGeneral;
  throw ConfigError("unknown weight mode '" + name + "'");
}

namespace {

std::int64_t median_ns(const std::function<void()>& fn, int warmup, int reps) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<std::int64_t> times;
  times.reserve(static_cast<size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(12);
  os << v;
  return os.str();
}

void write_row(std::ostream& out, const BenchRow& r) {
  out << r.n << "," << r.d << "," << r.mode << "," << fmt_double(r.eps) << ",";
  if (r.degree >= 0) out << r.degree;
  out << ",";
  if (r.rank >= 0) out << r.rank;
  out << "," << r.method << "," << r.wall_ns << ",";
  if (r.linf_err) out << fmt_double(*r.linf_err);
  out << "\n";
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchConfig& cfg, std::ostream& csv_out,
                                std::ostream& log) {
  if (cfg.n_list.empty()) throw ConfigError("bench: empty n list");
  if (!std::is_sorted(cfg.n_list.begin(), cfg.n_list.end()))
    throw ConfigError("bench: n list must be sorted ascending");
  if (cfg.warmup < 1) throw ConfigError("bench: warmup count must be >= 1");
  if (cfg.repeat < 1) throw ConfigError("bench: repeat count must be >= 1");
  const bool do_exact = cfg.run_exact || !cfg.run_fast;
  const bool do_fast = cfg.run_fast || !cfg.run_exact;
  if (do_exact && cfg.n_list.back() > cfg.n_exact_cap)
    throw ConfigError("bench: exact method refused above n = " +
                      std::to_string(cfg.n_exact_cap));

  csv_out.imbue(std::locale::classic());
  csv_out << "n,d,mode,eps,degree,rank,method,wall_ns,linf_err\n";

  FastOptions fopts;
  fopts.verify = FastOptions::Verify::kOff;
  fopts.threads = cfg.parallel ? env_thread_count() : 1;

  std::vector<BenchRow> rows;
  for (Index n : cfg.n_list) {
    Instance inst = gen_instance(cfg.seed, n, cfg.d, cfg.B, cfg.mode);
    Vec g_exact;
    if (do_exact) {
      BenchRow r;
      r.n = n;
      r.d = cfg.d;
      r.mode = mode_name(cfg.mode);
      r.eps = cfg.eps;
      r.method = "exact";
      GradIntermediates gi;
      r.wall_ns = median_ns([&] { gi = exact_gradient(inst); }, cfg.warmup,
                            cfg.repeat);
      g_exact = gi.g;
      write_row(csv_out, r);
      rows.push_back(std::move(r));
    }
    if (do_fast) {
      BenchRow r;
      r.n = n;
      r.d = cfg.d;
      r.mode = mode_name(cfg.mode);
      r.eps = cfg.eps;
      r.method = "fast";
      FastGradientResult res;
      r.wall_ns = median_ns([&] { res = fast_gradient(inst, cfg.eps, fopts); },
                            cfg.warmup, cfg.repeat);
      r.degree = res.degree;
      r.rank = res.gamma_rank;
      if (cfg.verify && n <= 2048) {
        if (g_exact.size() == 0) g_exact = exact_gradient(inst).g;
        r.linf_err = (res.g - g_exact).cwiseAbs().maxCoeff();
      }
      write_row(csv_out, r);
      rows.push_back(std::move(r));
    }
  }

  for (const char* method : {"exact", "fast"}) {
    std::vector<double> ns, ts;
    for (const auto& r : rows)
      if (r.method == method) {
        ns.push_back(static_cast<double>(r.n));
        ts.push_back(static_cast<double>(r.wall_ns));
      }
    if (ns.size() >= 2)
      log << "slope[" << method << "] = " << loglog_slope(ns, ts) << " over "
          << ns.size() << " points\n";
  }
  return rows;
}

}  // namespace ropegrad
