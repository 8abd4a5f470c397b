// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ropegrad/rope_model.hpp"

namespace ropegrad {

struct BenchConfig {
  std::vector<Index> n_list;
  Index d = 4;
  WeightMode mode = WeightMode::kRotary;
  double eps = 1e-2;
  double B = 0.5;
  bool run_exact = false;
  bool run_fast = false;  // neither flag set: both methods run
  int repeat = 5;
  int warmup = 2;
  std::uint64_t seed = 1;
  bool parallel = false;  // opt-in; timing is single-threaded otherwise
  bool verify = false;    // fill linf_err for the fast method (n <= 2048)
  Index n_exact_cap = 8192;
};

struct BenchRow {
  Index n = 0;
  Index d = 0;
  std::string mode;
  double eps = 0.0;
  int degree = -1;     // fast only
  Index rank = -1;     // fast only
  std::string method;  // "exact" | "fast"
  std::int64_t wall_ns = 0;
  std::optional<double> linf_err;
};

// Runs the benchmark matrix, writes the CSV (header included, LF endings,
// classic locale) to csv_out and a log-log slope summary per method to log.
std::vector<BenchRow> run_bench(const BenchConfig& cfg, std::ostream& csv_out,
                                std::ostream& log);

std::string mode_name(WeightMode mode);
WeightMode parse_mode(const std::string& name);

}  // namespace ropegrad
