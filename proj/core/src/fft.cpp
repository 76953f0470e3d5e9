// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/fft.hpp"

#include <cmath>

#include "uadps/errors.hpp"

namespace uadps {

Radix2Fft::Radix2Fft(int n) : n_(n) {
  if (n < 2 || (n & (n - 1)) != 0)
    throw InvalidInput("fft size must be a power of two >= 2, got " +
                       std::to_string(n));
  bitrev_.resize(n);
  int log2n = 0;
  while ((1 << log2n) < n) ++log2n;
  for (int i = 0; i < n; ++i) {
    int r = 0;
    for (int b = 0; b < log2n; ++b) r |= ((i >> b) & 1) << (log2n - 1 - b);
    bitrev_[i] = r;
  }
  tw_fwd_.resize(n / 2);
  tw_inv_.resize(n / 2);
  const double step = -2.0 * M_PI / n;
  for (int j = 0; j < n / 2; ++j) {
    tw_fwd_[j] = std::complex<double>(std::cos(step * j), std::sin(step * j));
    tw_inv_[j] = std::conj(tw_fwd_[j]);
  }
}

void Radix2Fft::transform(std::complex<double>* x, bool invert) const {
  const auto& tw = invert ? tw_inv_ : tw_fwd_;
  for (int i = 0; i < n_; ++i) {
    const int r = bitrev_[i];
    if (i < r) std::swap(x[i], x[r]);
  }
  for (int len = 2; len <= n_; len <<= 1) {
    const int half = len >> 1;
    const int stride = n_ / len;
    for (int i = 0; i < n_; i += len) {
      for (int j = 0; j < half; ++j) {
        const std::complex<double> w = tw[j * stride];
        const std::complex<double> u = x[i + j];
        const std::complex<double> v = x[i + j + half] * w;
        x[i + j] = u + v;
        x[i + j + half] = u - v;
      }
    }
  }
}

void Radix2Fft::forward(std::complex<double>* x) const {
  transform(x, false);
}

void Radix2Fft::inverse(std::complex<double>* x) const {
  transform(x, true);
  const double inv_n = 1.0 / n_;
  for (int i = 0; i < n_; ++i) x[i] *= inv_n;
}

}  // namespace uadps
