// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>

namespace ropegrad {

/// Worker count from ROPEGRAD_THREADS; unset or invalid means 1.
inline int env_thread_count() {
  const char* s = std::getenv("ROPEGRAD_THREADS");
  if (!s) return 1;
  int v = std::atoi(s);
  return v >= 1 ? v : 1;
}

}  // namespace ropegrad
