// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_METRICS_HPP
#define UADPS_METRICS_HPP

#include <vector>

namespace uadps {

// Scale-invariant signal-to-distortion ratio in dB, clamped to
// [-100, 100]. The target is the orthogonal projection of the estimate
// onto the reference, so any rescaling of the estimate is transparent; an
// estimate orthogonal to the reference bottoms out at -100 dB and an
// exact (scaled) copy saturates at +100 dB.
//   errors: length mismatch or all-zero reference -> InvalidInput.
double si_sdr(const std::vector<double>& estimate,
              const std::vector<double>& reference);

// Exhaustive permutation matching for K <= 4 sources: returns the
// permutation p maximizing mean_k si_sdr(estimates[p[k]], references[k]),
// i.e. p[k] is the estimate assigned to reference k.
//   errors: K == 0, K > 4, or list size mismatch -> InvalidInput.
std::vector<int> permute_match(
    const std::vector<std::vector<double>>& estimates,
    const std::vector<std::vector<double>>& references);

}  // namespace uadps

#endif  // UADPS_METRICS_HPP
