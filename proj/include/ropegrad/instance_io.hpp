// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>

#include "ropegrad/rope_model.hpp"

namespace ropegrad {

// Instance file format: one JSON document with n, d, B, mode
// ("identity" | "rotary" | "general"), base (rotary only), a general-mode
// weight table [{t, entries: [[row, col, value], ...]}, ...], and row-major
// nested arrays A1, A2, A3, X1, X2, Y, E. Loading validates every instance
// invariant and reports the first violated one.
Instance load_instance(std::istream& in);
Instance load_instance_file(const std::string& path);

void save_instance(const Instance& inst, std::ostream& out);
void save_instance_file(const Instance& inst, const std::string& path);

}  // namespace ropegrad
