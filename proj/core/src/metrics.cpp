// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "uadps/errors.hpp"

namespace uadps {

double si_sdr(const std::vector<double>& estimate,
              const std::vector<double>& reference) {
  if (estimate.size() != reference.size())
    throw InvalidInput("si_sdr: length mismatch (" +
                       std::to_string(estimate.size()) + " vs " +
                       std::to_string(reference.size()) + ")");
  if (estimate.empty()) throw InvalidInput("si_sdr: empty signals");
  double dot = 0.0, ref_e = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += estimate[i] * reference[i];
    ref_e += reference[i] * reference[i];
  }
  if (ref_e <= 0.0) throw InvalidInput("si_sdr: all-zero reference");
  const double scale = dot / ref_e;
  double sig_e = 0.0, err_e = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = scale * reference[i];
    const double e = estimate[i] - s;
    sig_e += s * s;
    err_e += e * e;
  }
  if (sig_e <= 0.0) return -100.0;  // estimate orthogonal to reference
  if (err_e <= 0.0) return 100.0;   // exact up to scale
  const double db = 10.0 * std::log10(sig_e / err_e);
  return std::clamp(db, -100.0, 100.0);
}

std::vector<int> permute_match(
    const std::vector<std::vector<double>>& estimates,
    const std::vector<std::vector<double>>& references) {
  const std::size_t K = references.size();
  if (K == 0 || estimates.size() != K)
    throw InvalidInput("permute_match: list size mismatch or empty");
  if (K > 4)
    throw InvalidInput("permute_match: exhaustive matching limited to K <= 4");

  // Precompute the K x K score table, then try all K! assignments.
  std::vector<std::vector<double>> score(K, std::vector<double>(K, 0.0));
  for (std::size_t e = 0; e < K; ++e)
    for (std::size_t r = 0; r < K; ++r)
      score[e][r] = si_sdr(estimates[e], references[r]);

  std::vector<int> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_sum = -1e300;
  do {
    double sum = 0.0;
    for (std::size_t r = 0; r < K; ++r)
      sum += score[static_cast<std::size_t>(perm[r])][r];
    if (sum > best_sum) {
      best_sum = sum;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace uadps
