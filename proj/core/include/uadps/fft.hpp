// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_FFT_HPP
#define UADPS_FFT_HPP

#include <complex>
#include <vector>

namespace uadps {

// In-place iterative radix-2 FFT. Frame sizes here are always powers of
// two (analysis window sizes), so a fixed-radix kernel with precomputed
// twiddles is all we need; it is also bit-deterministic, which matters
// because outputs are compared byte-for-byte across runs.
class Radix2Fft {
 public:
  explicit Radix2Fft(int n);  // n must be a power of two >= 2

  int size() const { return n_; }

  // DFT: x[k] = sum_n x[n] exp(-2*pi*i*k*n/N). No normalization.
  void forward(std::complex<double>* x) const;
  // Inverse DFT including the 1/N factor.
  void inverse(std::complex<double>* x) const;

 private:
  void transform(std::complex<double>* x, bool invert) const;

  int n_;
  std::vector<int> bitrev_;
  std::vector<std::complex<double>> tw_fwd_;  // exp(-2*pi*i*j/N), j < N/2
  std::vector<std::complex<double>> tw_inv_;
};

}  // namespace uadps

#endif  // UADPS_FFT_HPP
