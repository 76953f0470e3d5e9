// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_SPECTRAL_HPP
#define UADPS_SPECTRAL_HPP

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "uadps/errors.hpp"

namespace uadps {

using cplx = std::complex<double>;

// Single-channel complex STFT, bins x frames. By default the DC bin is
// dropped (keep_dc = false): rows map to FFT bins 1 .. fft_size/2, i.e.
// the Nyquist bin is kept. With keep_dc = true row 0 is the DC bin and
// rows() == fft_size/2 + 1.
struct Spectrogram {
  Eigen::MatrixXcd data;  // bins x frames
  int fft_size = 512;
  int hop = 128;
  double sample_rate = 16000.0;
  bool keep_dc = false;

  int bins() const { return static_cast<int>(data.rows()); }
  int frames() const { return static_cast<int>(data.cols()); }

  bool same_shape(const Spectrogram& o) const {
    return data.rows() == o.data.rows() && data.cols() == o.data.cols();
  }
  bool same_format(const Spectrogram& o) const {
    return same_shape(o) && fft_size == o.fft_size && hop == o.hop &&
           sample_rate == o.sample_rate && keep_dc == o.keep_dc;
  }
  bool all_finite() const { return data.allFinite(); }

  // Shape/format copy with zeroed data.
  Spectrogram zeros_like() const {
    Spectrogram s = *this;
    s.data.setZero();
    return s;
  }
};

// C synchronized channels of the same signal. channels[c] all share shape
// and STFT format.
struct MultiSpectrogram {
  std::vector<Spectrogram> channels;

  int num_channels() const { return static_cast<int>(channels.size()); }
  int bins() const { return channels.empty() ? 0 : channels[0].bins(); }
  int frames() const { return channels.empty() ? 0 : channels[0].frames(); }

  // Throws InvalidInput if channels disagree on shape or format.
  void check_consistent(const char* what) const;
};

// Periodic sqrt-Hann window of length n: sqrt(0.5 - 0.5 cos(2 pi k / n)).
// Used for both analysis and synthesis; with hop = n/4 the squared-window
// overlap-add sums to a constant, so stft -> istft is an identity on the
// covered interior.
std::vector<double> sqrt_hann(int n);

// Analysis. Frames start every `hop` samples; the last frame is
// zero-padded so frames() == 1 + ceil((len - fft_size) / hop).
//   pre: fft_size power of two, hop divides fft_size, len >= fft_size,
//        samples finite.
Spectrogram stft(const std::vector<double>& signal, int fft_size, int hop,
                 bool keep_dc = false, double sample_rate = 16000.0);

// Synthesis by overlap-add with per-sample normalization by the summed
// squared window. A spectrogram without its DC row resynthesizes with the
// per-frame DC content set to zero; use keep_dc analysis (or carry the DC
// row separately) when a lossless round trip is required.
//   pre: out_len <= (frames()-1)*hop + fft_size.
std::vector<double> istft(const Spectrogram& spec, int out_len);

// Magnitude-compressed domain: |X|^0.5 * exp(j angle(X)), with 0 -> 0.
Spectrogram compress(const Spectrogram& spec);

// Exact inverse of compress: |Xc|^2 * exp(j angle(Xc)) == |Xc| * Xc.
Spectrogram decompress(const Spectrogram& spec);

// Vector-Jacobian product of decompress at point x, treating complex
// arrays as real pairs (re, im). The real 2x2 Jacobian per bin is
//   J = r I + (1/r) v v^T,  v = (re, im),  r = |x|,
// which is symmetric, so vjp(x, g) = r g + (Re(conj(x) g) / r) x. The
// magnitude is clamped below by eps_mag to keep the pullback finite at
// the origin, where decompress is not differentiable.
Spectrogram decompress_vjp(const Spectrogram& x, const Spectrogram& cotangent,
                           double eps_mag = 1e-8);

// Splits a keep_dc spectrogram into its DC row and a DC-free body; the
// refinement loop runs on the body and the DC row is passed through
// untouched so synthesis stays lossless.
void split_dc(const Spectrogram& spec, Eigen::VectorXcd* dc_row,
              Spectrogram* body);
Spectrogram merge_dc(const Spectrogram& body, const Eigen::VectorXcd& dc_row);

}  // namespace uadps

#endif  // UADPS_SPECTRAL_HPP
