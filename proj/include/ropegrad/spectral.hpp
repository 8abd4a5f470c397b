// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "ropegrad/types.hpp"

namespace ropegrad {

/// Split-complex buffer; length must be a power of two.
struct ComplexBuffer {
  Vec re;
  Vec im;
  Index len() const { return re.size(); }
};

inline Index next_pow2(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Radix-2 iterative transform with a precomputed twiddle table, reusable
// across many inputs of the same length.
//
// For convolution-style workloads the scrambled pair skips both bit-reversal
// passes: forward_scrambled leaves the spectrum in bit-reversed order, and
// inverse_scrambled consumes that order. Pointwise spectral products are
// order-agnostic, so the permutation cancels.
class Fft {
 public:
  explicit Fft(Index len);

  Index len() const { return len_; }

  /// In-place transform; inverse scales by 1/len.
  void transform(double* re, double* im, bool inverse) const;

  /// Natural input -> bit-reversed spectrum.
  void forward_scrambled(double* re, double* im) const;

  /// Bit-reversed spectrum -> natural output, scaled by 1/len.
  void inverse_scrambled(double* re, double* im) const;

 private:
  void dit_passes(double* re, double* im, bool inverse) const;

  Index len_ = 0;
  std::vector<Index> bitrev_;
  std::vector<double> cos_;  // e^{-2 pi i k / len}, k < len / 2
  std::vector<double> sin_;
};

/// Standard DFT of a power-of-two buffer (inverse scales by 1/len).
ComplexBuffer fft(const ComplexBuffer& buf, bool inverse);

// All-lags cross-correlation: out(t + n - 1) = sum_i x(i + t) y(i) for
// t in [-(n-1), n-1], via zero-padded FFT of length next_pow2(2n).
Vec correlate_all_lags(const Vec& x, const Vec& y);

}  // namespace ropegrad
