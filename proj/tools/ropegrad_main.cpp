// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ropegrad/bench.hpp"
#include "ropegrad/errors.hpp"
#include "ropegrad/exact_grad.hpp"
#include "ropegrad/generator.hpp"
#include "ropegrad/instance_io.hpp"
#include "ropegrad/lowrank_grad.hpp"
#include "ropegrad/verify.hpp"

namespace {

using nlohmann::json;
using namespace ropegrad;

// Exit codes: 0 success, 1 failed check, 2 configuration error.
constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
}

int cmd_verify(const std::string& config_path, std::optional<std::uint64_t> seed) {
  VerifyConfig cfg;
  if (!config_path.empty()) {
    json j = load_config_file(config_path);
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("only"))
      for (const auto& id : j["only"]) cfg.only.push_back(id.get<std::string>());
    if (j.contains("tolerances"))
      for (auto& [k, v] : j["tolerances"].items())
        cfg.tolerance[k] = v.get<double>();
  }
  if (seed) cfg.seed = *seed;
  auto results = run_verify(cfg, std::cout);
  bool all = !results.empty();
  for (const auto& r : results) all = all && r.passed;
  std::cout << (all ? "all checks passed" : "CHECK FAILURES PRESENT") << "\n";
  return all ? kExitOk : kExitCheckFailed;
}

std::vector<Index> parse_n_list(const std::string& s) {
  std::vector<Index> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoll(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

json report_to_json(const std::optional<Vec>& g_exact,
                    const std::optional<Vec>& g_approx,
                    const std::optional<double>& linf_diff,
                    const std::map<std::string, std::int64_t>& stage_ns,
                    std::uint64_t seed) {
  json j;
  auto vec_to_json = [](const Vec& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
  };
  if (g_exact) j["g_exact"] = vec_to_json(*g_exact);
  if (g_approx) j["g_approx"] = vec_to_json(*g_approx);
  if (linf_diff) j["linf_diff"] = *linf_diff;
  j["stage_timings"] = stage_ns;
  j["seed"] = seed;
  return j;
}

int cmd_grad(const std::string& instance_path, const std::string& method,
             double eps, bool emit_json) {
  Instance inst = load_instance_file(instance_path);
  std::optional<Vec> g_exact, g_approx;
  std::optional<double> linf;
  std::map<std::string, std::int64_t> stage_ns;
  if (method == "exact") {
    const auto t0 = std::chrono::steady_clock::now();
    g_exact = exact_gradient(inst).g;
    stage_ns["total"] = std::chrono::duration_cast<std::chrono::nanoseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
  } else if (method == "fast") {
    FastGradientResult res = fast_gradient(inst, eps);
    g_approx = res.g;
    stage_ns = res.stage_ns;
    if (res.g_err) {
      g_exact = exact_gradient(inst).g;
      linf = (res.g - *g_exact).cwiseAbs().maxCoeff();
    }
    std::cerr << "degree " << res.degree << ", lift rank " << res.lift_rank
              << ", gamma rank " << res.gamma_rank << "\n";
  } else {
    throw ConfigError("grad: method must be 'exact' or 'fast'");
  }
  if (emit_json) {
    std::cout << report_to_json(g_exact, g_approx, linf, stage_ns, 0).dump(2)
              << "\n";
  } else {
    const Vec& g = g_exact ? *g_exact : *g_approx;
    std::cout << "gradient length " << g.size() << ", |g|_inf = "
              << g.cwiseAbs().maxCoeff() << "\n";
    if (linf) std::cout << "|g_fast - g_exact|_inf = " << *linf << "\n";
    for (const auto& [stage, ns] : stage_ns)
      std::cout << "  " << stage << ": " << ns << " ns\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RoPE attention regression gradients: exact and almost-linear paths"};
  app.require_subcommand(1);

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "run the acceptance checks");
  std::string verify_config;
  std::uint64_t verify_seed = 0;
  bool verify_seed_set = false;
  verify_cmd->add_option("--config", verify_config, "JSON config file");
  verify_cmd->add_option("--seed", verify_seed, "random seed")
      ->each([&](const std::string&) { verify_seed_set = true; });

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "scaling benchmark, CSV output");
  std::string bench_config, n_list_str, bench_mode = "rotary", bench_out;
  BenchConfig bcfg;
  bool flag_exact = false, flag_fast = false;
  bench_cmd->add_option("--config", bench_config, "JSON config file");
  bench_cmd->add_option("--n-list", n_list_str, "comma-separated sizes");
  bench_cmd->add_option("--d", bcfg.d, "head dimension");
  bench_cmd->add_option("--mode", bench_mode, "rotary|identity");
  bench_cmd->add_option("--eps", bcfg.eps, "fast-path accuracy target");
  bench_cmd->add_option("--B", bcfg.B, "entry bound");
  bench_cmd->add_flag("--exact", flag_exact, "run the exact method");
  bench_cmd->add_flag("--fast", flag_fast, "run the fast method");
  bench_cmd->add_option("--repeat", bcfg.repeat, "timed repetitions (median)");
  bench_cmd->add_option("--warmup", bcfg.warmup, "warmup runs");
  bench_cmd->add_option("--seed", bcfg.seed, "random seed");
  bench_cmd->add_flag("--parallel", bcfg.parallel,
                      "allow ROPEGRAD_THREADS workers (excluded from slope fits)");
  bench_cmd->add_option("--out", bench_out, "CSV output file (default stdout)");

  // grad
  auto* grad_cmd = app.add_subcommand("grad", "gradient of one instance file");
  std::string instance_path, method = "exact";
  double grad_eps = 1e-3;
  bool emit_json = false;
  grad_cmd->add_option("--instance", instance_path, "instance JSON file")
      ->required();
  grad_cmd->add_option("--method", method, "exact|fast")->required();
  grad_cmd->add_option("--eps", grad_eps, "fast-path accuracy target");
  grad_cmd->add_flag("--emit-json", emit_json, "print a JSON GradReport");

  // gen (convenience: produce instance files for `grad`)
  auto* gen_cmd = app.add_subcommand("gen", "write a random instance file");
  std::string gen_out, gen_mode = "rotary";
  std::uint64_t gen_seed = 1;
  Index gen_n = 64, gen_d = 4;
  double gen_B = 0.5, gen_sigma = 0.1;
  gen_cmd->add_option("--out", gen_out, "output path")->required();
  gen_cmd->add_option("--n", gen_n, "sequence length");
  gen_cmd->add_option("--d", gen_d, "head dimension");
  gen_cmd->add_option("--B", gen_B, "entry bound");
  gen_cmd->add_option("--mode", gen_mode, "rotary|identity");
  gen_cmd->add_option("--seed", gen_seed, "random seed");
  gen_cmd->add_option("--sigma", gen_sigma, "target perturbation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify_cmd->parsed()) {
      return cmd_verify(verify_config,
                        verify_seed_set ? std::optional<std::uint64_t>(verify_seed)
                                        : std::nullopt);
    }
    if (bench_cmd->parsed()) {
      if (!bench_config.empty()) {
        json j = load_config_file(bench_config);
        if (j.contains("n_list") && n_list_str.empty())
          for (const auto& v : j["n_list"]) bcfg.n_list.push_back(v.get<Index>());
        if (j.contains("d") && !bench_cmd->count("--d")) bcfg.d = j["d"];
        if (j.contains("mode") && !bench_cmd->count("--mode"))
          bench_mode = j["mode"].get<std::string>();
        if (j.contains("eps") && !bench_cmd->count("--eps")) bcfg.eps = j["eps"];
        if (j.contains("B") && !bench_cmd->count("--B")) bcfg.B = j["B"];
        if (j.contains("exact") && !flag_exact) flag_exact = j["exact"];
        if (j.contains("fast") && !flag_fast) flag_fast = j["fast"];
        if (j.contains("repeat") && !bench_cmd->count("--repeat"))
          bcfg.repeat = j["repeat"];
        if (j.contains("warmup") && !bench_cmd->count("--warmup"))
          bcfg.warmup = j["warmup"];
        if (j.contains("seed") && !bench_cmd->count("--seed")) bcfg.seed = j["seed"];
        if (j.contains("verify")) bcfg.verify = j["verify"];
        if (j.contains("n_exact_cap")) bcfg.n_exact_cap = j["n_exact_cap"];
        if (j.contains("out") && bench_out.empty())
          bench_out = j["out"].get<std::string>();
      }
      if (!n_list_str.empty()) bcfg.n_list = parse_n_list(n_list_str);
      bcfg.mode = parse_mode(bench_mode);
      bcfg.run_exact = flag_exact;
      bcfg.run_fast = flag_fast;
      if (!bench_out.empty()) {
        std::ofstream out(bench_out, std::ios::binary);
        if (!out) throw ConfigError("cannot open output file: " + bench_out);
        run_bench(bcfg, out, std::cerr);
      } else {
        run_bench(bcfg, std::cout, std::cerr);
      }
      return kExitOk;
    }
    if (grad_cmd->parsed())
      return cmd_grad(instance_path, method, grad_eps, emit_json);
    if (gen_cmd->parsed()) {
      GenOptions opts;
      opts.sigma = gen_sigma;
      Instance inst =
          gen_instance(gen_seed, gen_n, gen_d, gen_B, parse_mode(gen_mode), opts);
      save_instance_file(inst, gen_out);
      std::cerr << "wrote " << gen_out << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitConfig;
}
