// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace ropegrad {

struct CheckResult {
  std::string id;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

struct VerifyConfig {
  std::uint64_t seed = 1;
  std::vector<std::string> only;                 // empty: run everything
  std::map<std::string, double> tolerance;       // per-check overrides
};

// Runs the acceptance checks in order, one result per configured check.
// Each check enforces its numeric tolerance and its wall-clock budget.
std::vector<CheckResult> run_verify(const VerifyConfig& cfg, std::ostream& log);

/// Least-squares slope of log(t) against log(n).
double loglog_slope(const std::vector<double>& ns, const std::vector<double>& ts);

}  // namespace ropegrad
