// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/pipeline.hpp"

#include <cmath>

#include "uadps/rng.hpp"

namespace uadps {

namespace {

// Substream key for a source: a content hash of its discriminative
// estimate. Keying by content rather than list position makes refine()
// equivariant under permutations of its inputs.
std::uint64_t source_key(const Spectrogram& discrim) {
  std::uint64_t h = hash_combine(mix64(static_cast<std::uint64_t>(discrim.bins())),
                                 mix64(static_cast<std::uint64_t>(discrim.frames())));
  return hash_bytes(discrim.data.data(),
                    static_cast<std::size_t>(discrim.data.size()) * sizeof(cplx),
                    h);
}

}  // namespace

PrepareScmResult prepare_scm(const MultiSpectrogram& mixture,
                             const std::vector<Spectrogram>& discriminative,
                             const FcpConfig& fcp, double eta,
                             double load_delta) {
  mixture.check_consistent("prepare_scm");
  if (discriminative.empty()) throw InvalidInput("prepare_scm: no sources");
  if (!(load_delta >= 0.0))
    throw InvalidInput("prepare_scm: load_delta must be >= 0");
  PrepareScmResult out;
  out.filters.reserve(discriminative.size());
  for (const Spectrogram& d : discriminative)
    out.filters.push_back(fcp_estimate(d, mixture, fcp));
  MultiSpectrogram noise = estimate_noise(mixture, discriminative, out.filters);
  ScmField field = scm_ema(noise, eta);
  field.load_delta = load_delta;
  out.inv_scm = scm_inverse(field);
  return out;
}

std::vector<Spectrogram> align_sources(
    const std::vector<Spectrogram>& dps_out,
    const std::vector<Spectrogram>& discriminative, const FcpConfig& align) {
  if (dps_out.size() != discriminative.size())
    throw InvalidInput("align_sources: list size mismatch");
  std::vector<Spectrogram> out;
  out.reserve(dps_out.size());
  for (std::size_t k = 0; k < dps_out.size(); ++k) {
    MultiSpectrogram target;
    target.channels.push_back(discriminative[k]);
    AtfFilter f = fcp_estimate(dps_out[k], target, align);
    out.push_back(apply_atf(dps_out[k], f).channels[0]);
  }
  return out;
}

RefineResult refine(const MultiSpectrogram& mixture,
                    const std::vector<Spectrogram>& discriminative,
                    const std::vector<Denoiser*>& denoisers,
                    const RefineConfig& cfg, const Schedule& sched,
                    const ScmField* inv_scm_override) {
  mixture.check_consistent("refine");
  const std::size_t K = discriminative.size();
  if (K == 0) throw InvalidInput("refine: no sources");
  if (denoisers.size() != K)
    throw InvalidInput("refine: need one denoiser per source");
  for (std::size_t k = 0; k < K; ++k)
    if (!discriminative[k].same_format(mixture.channels[0]))
      throw InvalidInput("refine: source " + std::to_string(k) +
                         " does not match the mixture's shape/format");
  if (cfg.t_start < 0 || cfg.t_start > sched.T)
    throw InvalidInput("refine: t_start outside [0, T]");
  if (cfg.stride < 1) throw InvalidInput("refine: stride must be >= 1");
  if (!(cfg.alpha_interp >= 0.0 && cfg.alpha_interp <= 1.0))
    throw InvalidInput("refine: alpha_interp outside [0, 1]");
  if (cfg.guidance.xi < 0.0) throw InvalidInput("refine: xi must be >= 0");

  // The loop runs DC-free; any DC rows ride along untouched.
  const bool has_dc = mixture.channels[0].keep_dc;
  MultiSpectrogram ybody;
  std::vector<Spectrogram> dbody(K);
  std::vector<Eigen::VectorXcd> dc_src(K);
  if (has_dc) {
    ybody.channels.resize(mixture.channels.size());
    Eigen::VectorXcd dc_tmp;
    for (std::size_t c = 0; c < mixture.channels.size(); ++c)
      split_dc(mixture.channels[c], &dc_tmp, &ybody.channels[c]);
    for (std::size_t k = 0; k < K; ++k)
      split_dc(discriminative[k], &dc_src[k], &dbody[k]);
  } else {
    ybody = mixture;
    dbody = discriminative;
  }

  RefineResult result;
  if (inv_scm_override) {
    result.inv_scm = *inv_scm_override;
  } else {
    PrepareScmResult prep = prepare_scm(ybody, dbody, cfg.guidance.fcp,
                                        cfg.eta, cfg.scm_load_delta);
    result.inv_scm = std::move(prep.inv_scm);
    result.init_filters = std::move(prep.filters);
  }

  std::vector<std::uint64_t> keys(K);
  std::vector<Spectrogram> state(K);
  for (std::size_t k = 0; k < K; ++k) {
    keys[k] = source_key(dbody[k]);
    state[k] = compress(dbody[k]);
  }

  if (cfg.t_start >= 1) {
    for (std::size_t k = 0; k < K; ++k) {
      GaussianStream g(substream_seed(cfg.seed, "init", keys[k]));
      state[k] = forward_to_step(state[k], cfg.t_start, sched, g);
    }
    int t = cfg.t_start;
    while (t >= 1) {
      const int block = std::min(cfg.stride, t);
      std::vector<Spectrogram> eps(K);
      for (std::size_t k = 0; k < K; ++k)
        eps[k] = denoisers[k]->estimate_noise(state[k], t);

      GuidanceReport rep;
      std::vector<Spectrogram> grads =
          likelihood_grad_with_eps(state, eps, denoisers, t, ybody,
                                   result.inv_scm, cfg.guidance, &rep);
      StepReport sr;
      sr.t = t;
      sr.quadratic_value = rep.quadratic_value;
      sr.grad_norm = rep.grad_norm;
      sr.fcp_solve_failures = rep.fcp_solve_failures;
      result.steps.push_back(std::move(sr));

      for (int b = 0; b < block; ++b) {
        const int tc = t - b;
        for (std::size_t k = 0; k < K; ++k) {
          GaussianStream g(substream_seed(cfg.seed, "prior", keys[k],
                                          static_cast<std::uint64_t>(tc)));
          state[k] = prior_step(state[k], eps[k], tc, sched, g);
        }
        if (cfg.guidance.xi > 0.0)
          state = apply_guidance(state, grads, tc, sched, cfg.guidance.xi);
      }
      t -= block;
    }
  }

  result.dps_raw.resize(K);
  for (std::size_t k = 0; k < K; ++k)
    result.dps_raw[k] = decompress(state[k]);
  result.aligned = align_sources(result.dps_raw, dbody, cfg.align);

  result.refined.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double a = cfg.alpha_interp;
    if (a == 1.0) {
      result.refined[k] = dbody[k];  // exact pass-through
    } else if (a == 0.0) {
      result.refined[k] = result.aligned[k];
    } else {
      result.refined[k] = dbody[k];
      result.refined[k].data =
          a * dbody[k].data + (1.0 - a) * result.aligned[k].data;
    }
  }

  if (has_dc) {
    for (std::size_t k = 0; k < K; ++k) {
      result.refined[k] = merge_dc(result.refined[k], dc_src[k]);
      result.aligned[k] = merge_dc(result.aligned[k], dc_src[k]);
      result.dps_raw[k] = merge_dc(result.dps_raw[k], dc_src[k]);
    }
  }
  return result;
}

}  // namespace uadps
