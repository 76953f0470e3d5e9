// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_PIPELINE_HPP
#define UADPS_PIPELINE_HPP

#include <cstdint>
#include <vector>

#include "uadps/guidance.hpp"

namespace uadps {

struct RefineConfig {
  int t_start = 300;          // diffusion step to start sampling from
  double alpha_interp = 0.5;  // final mix: alpha*discriminative + (1-alpha)*aligned
  double eta = 0.95;          // SCM forgetting factor
  // Heavier loading than scm_inverse's own default: the EMA's first few
  // frames are near rank-1, and their barely-loaded inverses hand the
  // guidance gradient a 1e3-1e4x weight spike that wrecks the sampler.
  double scm_load_delta = 5e-2;
  int stride = 1;  // experimental: >1 reuses eps_hat/guidance across steps
  std::uint64_t seed = 0;
  GuidanceConfig guidance;            // xi, grad_mode, fcp, eps_mag
  FcpConfig align{1, 1e-3, 0};        // single-tap alignment by default
};

// Per-step diagnostics from the sampling loop.
struct StepReport {
  int t = 0;
  double quadratic_value = 0.0;
  std::vector<double> grad_norm;
  int fcp_solve_failures = 0;
};

struct RefineResult {
  std::vector<Spectrogram> refined;   // alpha-interpolated outputs
  std::vector<Spectrogram> aligned;   // DPS outputs aligned to the inputs
  std::vector<Spectrogram> dps_raw;   // decompressed final diffusion states
  ScmField inv_scm;                   // loaded inverse used for guidance
  std::vector<AtfFilter> init_filters;  // filters behind the SCM estimate
  std::vector<StepReport> steps;
};

struct PrepareScmResult {
  ScmField inv_scm;
  std::vector<AtfFilter> filters;
};

// Estimates per-source filters from the discriminative outputs, forms the
// noise residual, runs the covariance EMA once, and returns the loaded
// inverse field. The field stays fixed for the whole sampling run.
PrepareScmResult prepare_scm(const MultiSpectrogram& mixture,
                             const std::vector<Spectrogram>& discriminative,
                             const FcpConfig& fcp, double eta,
                             double load_delta = 5e-2);

// Aligns each raw output to its discriminative counterpart with a short
// least-squares filter (gain/delay repair after sampling).
std::vector<Spectrogram> align_sources(
    const std::vector<Spectrogram>& dps_out,
    const std::vector<Spectrogram>& discriminative, const FcpConfig& align);

// Full refinement: compress the discriminative estimates, noise them to
// t_start, run guided reverse diffusion, align, and interpolate.
//
// Determinism: every noise draw comes from a substream keyed by (seed,
// purpose, a content hash of the source's discriminative estimate, step),
// so results are bitwise reproducible for a given seed, independent of
// worker count, and permuting the input sources permutes the outputs.
//
// Inputs may carry a DC row (keep_dc); it is split off, passed through
// untouched, and re-attached to every output.
//
// inv_scm_override substitutes a caller-provided inverse field for the
// one prepare_scm would build (diagnostics and ablations).
RefineResult refine(const MultiSpectrogram& mixture,
                    const std::vector<Spectrogram>& discriminative,
                    const std::vector<Denoiser*>& denoisers,
                    const RefineConfig& cfg, const Schedule& sched,
                    const ScmField* inv_scm_override = nullptr);

}  // namespace uadps

#endif  // UADPS_PIPELINE_HPP
