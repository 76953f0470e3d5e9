// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_FCP_HPP
#define UADPS_FCP_HPP

#include <Eigen/Dense>
#include <vector>

#include "uadps/spectral.hpp"

namespace uadps {

// Per-frequency multi-frame complex filter mapping a source's STFT to its
// image at each channel:
//   image_c(l, f) = sum_j taps_c(j, f) * source(l - (j - future_taps), f).
// future_taps = 0 is the causal default; a positive value lets the first
// few taps look ahead.
struct AtfFilter {
  std::vector<Eigen::MatrixXcd> taps;  // per channel: n_taps x bins
  int n_taps = 0;
  int future_taps = 0;

  int num_channels() const { return static_cast<int>(taps.size()); }
  int bins() const {
    return taps.empty() ? 0 : static_cast<int>(taps[0].cols());
  }
};

struct FcpConfig {
  int n_taps = 13;
  double gamma = 1e-3;    // weight floor, relative to the peak bin power
  int causal_offset = 0;  // number of future taps (experimental)
};

// Optional diagnostics from fcp_estimate.
struct FcpStats {
  int solve_failures = 0;  // frequencies where factorization failed
};

// Per-bin weighting for the least squares: channel-mean target power plus
// gamma times its global maximum. Returns a bins x frames matrix.
//   errors: all-zero target with gamma == 0 -> DegenerateWeights.
Eigen::MatrixXd fcp_weights(const MultiSpectrogram& target, double gamma);

// Weighted least-squares filter estimate, solved per frequency. All
// channels at one frequency share the same Gram matrix, so it is factored
// once and solved against C right-hand sides. A small ridge
// (1e-8 * trace / n_taps) keeps the factorization positive definite;
// iterative refinement against the unridged normal equations then removes
// the ridge bias, so exact-fit problems are recovered to machine
// precision. The right-hand side always lies in the Gram's range (both
// come from the same data), which is what makes the refinement safe on
// rank-deficient bins.
//   - a bin whose Gram trace is zero (silent source) yields zero taps;
//   - a bin whose factorization fails yields zero taps and increments
//     stats->solve_failures.
//   errors: shape mismatch -> InvalidInput; non-positive weights ->
//   DegenerateWeights.
AtfFilter fcp_estimate(const Spectrogram& source,
                       const MultiSpectrogram& target, const FcpConfig& cfg,
                       FcpStats* stats = nullptr);

// Convolves the source with the filter along frames; output frames beyond
// the source length are dropped (same L in, same L out).
MultiSpectrogram apply_atf(const Spectrogram& source, const AtfFilter& filter);

// Adjoint of apply_atf under the real inner product Re<a, b>:
//   out(l, f) = sum_c sum_j conj(taps_c(j, f)) * residual_c(l + d_j, f),
// d_j = j - future_taps, frames beyond the range contributing zero.
Spectrogram apply_atf_adjoint(const MultiSpectrogram& residual,
                              const AtfFilter& filter);

}  // namespace uadps

#endif  // UADPS_FCP_HPP
