// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/spectral.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ropegrad/errors.hpp"

namespace ropegrad {

Fft::Fft(Index len) : len_(len) {
  if (len < 1 || (len & (len - 1)) != 0)
    throw ShapeError("fft: length " + std::to_string(len) +
                     " is not a power of two");
  bitrev_.resize(static_cast<size_t>(len));
  Index bits = 0;
  while ((Index(1) << bits) < len) ++bits;
  for (Index i = 0; i < len; ++i) {
    Index r = 0;
    for (Index b = 0; b < bits; ++b)
      if (i & (Index(1) << b)) r |= Index(1) << (bits - 1 - b);
    bitrev_[static_cast<size_t>(i)] = r;
  }
  cos_.resize(static_cast<size_t>(len / 2));
  sin_.resize(static_cast<size_t>(len / 2));
  for (Index k = 0; k < len / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) /
                       static_cast<double>(len);
    cos_[static_cast<size_t>(k)] = std::cos(ang);
    sin_[static_cast<size_t>(k)] = std::sin(ang);
  }
}

void Fft::dit_passes(double* re, double* im, bool inverse) const {
  const Index n = len_;
  for (Index size = 2; size <= n; size <<= 1) {
    const Index half = size >> 1;
    const Index step = n / size;
    for (Index start = 0; start < n; start += size) {
      for (Index j = 0; j < half; ++j) {
        const double wr = cos_[static_cast<size_t>(j * step)];
        const double wi = inverse ? -sin_[static_cast<size_t>(j * step)]
                                  : sin_[static_cast<size_t>(j * step)];
        const Index a = start + j;
        const Index b = a + half;
        const double tr = re[b] * wr - im[b] * wi;
        const double ti = re[b] * wi + im[b] * wr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
      }
    }
  }
}

void Fft::transform(double* re, double* im, bool inverse) const {
  const Index n = len_;
  for (Index i = 0; i < n; ++i) {
    const Index j = bitrev_[static_cast<size_t>(i)];
    if (j > i) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  dit_passes(re, im, inverse);
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (Index i = 0; i < n; ++i) {
      re[i] *= scale;
      im[i] *= scale;
    }
  }
}

void Fft::forward_scrambled(double* re, double* im) const {
  const Index n = len_;
  for (Index size = n; size >= 2; size >>= 1) {
    const Index half = size >> 1;
    const Index step = n / size;
    for (Index start = 0; start < n; start += size) {
      for (Index j = 0; j < half; ++j) {
        const double wr = cos_[static_cast<size_t>(j * step)];
        const double wi = sin_[static_cast<size_t>(j * step)];
        const Index a = start + j;
        const Index b = a + half;
        const double sr = re[a] - re[b];
        const double si = im[a] - im[b];
        re[a] += re[b];
        im[a] += im[b];
        re[b] = sr * wr - si * wi;
        im[b] = sr * wi + si * wr;
      }
    }
  }
}

void Fft::inverse_scrambled(double* re, double* im) const {
  dit_passes(re, im, true);
  const double scale = 1.0 / static_cast<double>(len_);
  for (Index i = 0; i < len_; ++i) {
    re[i] *= scale;
    im[i] *= scale;
  }
}

ComplexBuffer fft(const ComplexBuffer& buf, bool inverse) {
  if (buf.re.size() != buf.im.size())
    throw ShapeError("fft: re/im length mismatch");
  Fft plan(buf.len());
  ComplexBuffer out = buf;
  plan.transform(out.re.data(), out.im.data(), inverse);
  return out;
}

Vec correlate_all_lags(const Vec& x, const Vec& y) {
  if (x.size() != y.size())
    throw ShapeError("correlate_all_lags: length mismatch (" +
                     std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  const Index n = x.size();
  const Index m = next_pow2(2 * n);
  Fft plan(m);
  Vec xr = Vec::Zero(m), xi = Vec::Zero(m);
  Vec yr = Vec::Zero(m), yi = Vec::Zero(m);
  xr.head(n) = x;
  for (Index i = 0; i < n; ++i) yr(i) = y(n - 1 - i);  // correlation = conv with reversed y
  plan.forward_scrambled(xr.data(), xi.data());
  plan.forward_scrambled(yr.data(), yi.data());
  for (Index i = 0; i < m; ++i) {
    const double r = xr(i) * yr(i) - xi(i) * yi(i);
    const double im = xr(i) * yi(i) + xi(i) * yr(i);
    xr(i) = r;
    xi(i) = im;
  }
  plan.inverse_scrambled(xr.data(), xi.data());
  return xr.head(2 * n - 1);
}

}  // namespace ropegrad
