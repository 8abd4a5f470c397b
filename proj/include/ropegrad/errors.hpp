// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ropegrad {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible matrix/vector dimensions.
struct ShapeError : Error {
  using Error::Error;
};

// A materialization or problem-size guard was exceeded.
struct SizeGuardError : Error {
  using Error::Error;
};

// Invalid parameter or configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// Instance violates an entry-bound assumption.
struct BoundError : Error {
  using Error::Error;
};

// A low-rank factor width would exceed the configured cap.
struct RankBudgetError : Error {
  using Error::Error;
};

// Polynomial certification failed at every admissible degree.
struct ApproxError : Error {
  double achieved_err = 0.0;
  ApproxError(const std::string& msg, double achieved)
      : Error(msg), achieved_err(achieved) {}
};

// Requested a fast path that does not exist for this weight family.
struct UnsupportedError : Error {
  using Error::Error;
};

}  // namespace ropegrad
