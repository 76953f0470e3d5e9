// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/guidance.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "uadps/parallel.hpp"
#include "uadps/rng.hpp"

namespace uadps {

namespace {

// Matches the ridge policy in fcp.cpp; the implicit-function pullback
// linearizes the same solve the forward pass performed.
constexpr double kRidgeScale = 1e-8;

// Deterministic real inner product sum_{l,f} Re(conj(a) . b), accumulated
// per frequency and reduced in index order.
double real_inner(const MultiSpectrogram& a, const MultiSpectrogram& b) {
  const int F = a.bins();
  const int C = a.num_channels();
  std::vector<double> partial(static_cast<std::size_t>(F), 0.0);
  parallel_for(0, F, [&](int f) {
    double acc = 0.0;
    for (int c = 0; c < C; ++c) {
      const auto& ra = a.channels[static_cast<std::size_t>(c)].data;
      const auto& rb = b.channels[static_cast<std::size_t>(c)].data;
      for (int l = 0; l < a.frames(); ++l) {
        const cplx va = ra(f, l), vb = rb(f, l);
        acc += va.real() * vb.real() + va.imag() * vb.imag();
      }
    }
    partial[static_cast<std::size_t>(f)] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

// d/dx* of the objective routed through the least-squares filter, via the
// implicit-function rule on the (ridged) normal equations. Returns the
// co-derivative D_x = df/dx* per bin of the source; the caller doubles it
// into the real-pair gradient. q is inv_scm * n.
Spectrogram fcp_implicit_coderivative(const Spectrogram& source,
                                      const MultiSpectrogram& mixture,
                                      const MultiSpectrogram& q,
                                      const AtfFilter& filter,
                                      const FcpConfig& cfg) {
  const int F = source.bins();
  const int L = source.frames();
  const int N = cfg.n_taps;
  const int C = mixture.num_channels();
  const Eigen::MatrixXd lam = fcp_weights(mixture, cfg.gamma);

  Spectrogram out = source.zeros_like();
  parallel_for(0, F, [&](int f) {
    const Eigen::VectorXcd x = source.data.row(f).transpose();
    Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(L, N);
    for (int j = 0; j < N; ++j) {
      const int d = j - cfg.causal_offset;
      const int lo = std::max(0, d);
      const int hi = std::min(L, L + d);
      if (hi > lo) s.col(j).segment(lo, hi - lo) = x.segment(lo - d, hi - lo);
    }
    const Eigen::VectorXd w = lam.row(f).transpose().cwiseInverse();
    Eigen::MatrixXcd sw = w.cwiseSqrt().asDiagonal() * s;
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(N, N);
    a.selfadjointView<Eigen::Lower>().rankUpdate(sw.adjoint());
    Eigen::MatrixXcd afull = a.selfadjointView<Eigen::Lower>();
    const double tr = afull.real().trace();
    Eigen::MatrixXcd ar = afull;
    ar.diagonal().array() += kRidgeScale * std::max(tr, 0.0) / N + 1e-300;
    Eigen::LLT<Eigen::MatrixXcd> llt(ar);
    if (llt.info() != Eigen::Success) return;  // forward pass zeroed taps too

    Eigen::MatrixXcd h(N, C), qf(L, C), yf(L, C);
    for (int c = 0; c < C; ++c) {
      h.col(c) = filter.taps[static_cast<std::size_t>(c)].col(f);
      qf.col(c) =
          q.channels[static_cast<std::size_t>(c)].data.row(f).transpose();
      yf.col(c) =
          mixture.channels[static_cast<std::size_t>(c)].data.row(f).transpose();
    }
    // D_H = df/dH* = -S^H Q; lambda solves the adjoint system.
    Eigen::MatrixXcd dh = -(s.adjoint() * qf);
    Eigen::MatrixXcd lambda = llt.solve(dh);
    // D_S = W [ Y lambda^H - S (lambda h^H + h lambda^H) ].
    Eigen::MatrixXcd ds =
        yf * lambda.adjoint() -
        s * (lambda * h.adjoint() + h * lambda.adjoint());
    ds = w.asDiagonal() * ds;
    // Fold the lag structure back: D_x(m) = sum_j D_S(m + d_j, j).
    Eigen::VectorXcd dx = Eigen::VectorXcd::Zero(L);
    for (int j = 0; j < N; ++j) {
      const int d = j - cfg.causal_offset;
      const int lo = std::max(0, -d);
      const int hi = std::min(L, L - d);
      if (hi > lo)
        dx.segment(lo, hi - lo) += ds.col(j).segment(lo + d, hi - lo);
    }
    out.data.row(f) = dx.transpose();
  });
  return out;
}

}  // namespace

std::vector<Spectrogram> likelihood_grad(
    const std::vector<Spectrogram>& xbar_t,
    const std::vector<Denoiser*>& denoisers, int t,
    const MultiSpectrogram& mixture, const ScmField& inv_scm,
    const GuidanceConfig& cfg, GuidanceReport* report) {
  if (xbar_t.size() != denoisers.size())
    throw InvalidInput("likelihood_grad: sources/denoisers count mismatch");
  std::vector<Spectrogram> eps;
  eps.reserve(xbar_t.size());
  for (std::size_t k = 0; k < xbar_t.size(); ++k)
    eps.push_back(denoisers[k]->estimate_noise(xbar_t[k], t));
  return likelihood_grad_with_eps(xbar_t, eps, denoisers, t, mixture, inv_scm,
                                  cfg, report);
}

std::vector<Spectrogram> likelihood_grad_with_eps(
    const std::vector<Spectrogram>& xbar_t,
    const std::vector<Spectrogram>& eps_hats,
    const std::vector<Denoiser*>& denoisers, int t,
    const MultiSpectrogram& mixture, const ScmField& inv_scm,
    const GuidanceConfig& cfg, GuidanceReport* report) {
  mixture.check_consistent("likelihood_grad");
  const std::size_t K = xbar_t.size();
  if (eps_hats.size() != K || denoisers.size() != K)
    throw InvalidInput("likelihood_grad: per-source list size mismatch");
  if (K == 0) throw InvalidInput("likelihood_grad: no sources");
  if (cfg.grad_mode == GradMode::kFullVjp)
    for (auto* d : denoisers)
      if (!d->has_vjp())
        throw CapabilityError(
            "likelihood_grad: FullVjp requested but denoiser has no vjp");

  const Schedule& sched = denoisers[0]->schedule();
  const double ab = sched.alpha_bar_at(t);
  const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
  const double sqrt_1mab = std::sqrt(1.0 - ab);

  // Forward chain, shared pieces kept for the pullback.
  std::vector<Spectrogram> xbar0(K), x0(K);
  std::vector<AtfFilter> filters(K);
  int fcp_failures = 0;
  for (std::size_t k = 0; k < K; ++k) {
    xbar0[k] = one_step_denoise(xbar_t[k], eps_hats[k], t, sched);
    x0[k] = decompress(xbar0[k]);
    FcpStats stats;
    filters[k] = fcp_estimate(x0[k], mixture, cfg.fcp, &stats);
    fcp_failures += stats.solve_failures;
  }
  MultiSpectrogram n_hat = estimate_noise(mixture, x0, filters);
  MultiSpectrogram q = apply_field(inv_scm, n_hat);

  std::vector<Spectrogram> grads(K);
  std::vector<double> norms(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    // Real-pair gradient wrt x0: the direct term -2 B^H q, plus the
    // implicit filter term when enabled.
    Spectrogram g = apply_atf_adjoint(q, filters[k]);
    g.data *= -2.0;
    if (cfg.differentiate_through_fcp) {
      Spectrogram dfcp = fcp_implicit_coderivative(x0[k], mixture, q,
                                                   filters[k], cfg.fcp);
      g.data += 2.0 * dfcp.data;
    }
    g = decompress_vjp(xbar0[k], g, cfg.eps_mag);
    if (cfg.grad_mode == GradMode::kFullVjp) {
      Spectrogram through_eps = denoisers[k]->vjp(xbar_t[k], t, g);
      g.data = (g.data - sqrt_1mab * through_eps.data) * inv_sqrt_ab;
    } else {
      g.data *= inv_sqrt_ab;
    }
    g.data *= -0.5;
    grads[k] = std::move(g);
    norms[k] = grads[k].data.norm();
  }

  if (report) {
    report->quadratic_value = real_inner(n_hat, q);
    report->grad_norm = std::move(norms);
    report->fcp_solve_failures = fcp_failures;
  }
  return grads;
}

std::vector<Spectrogram> apply_guidance(
    const std::vector<Spectrogram>& xbar_prev,
    const std::vector<Spectrogram>& grads, int t, const Schedule& sched,
    double xi) {
  if (xbar_prev.size() != grads.size())
    throw InvalidInput("apply_guidance: state/gradient count mismatch");
  if (xi < 0.0) throw InvalidInput("apply_guidance: xi must be >= 0");
  const double a = sched.alpha_at(t);
  const double coef = xi * (1.0 - a) / std::sqrt(a);
  std::vector<Spectrogram> out = xbar_prev;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!out[k].same_shape(grads[k]))
      throw InvalidInput("apply_guidance: shape mismatch at source " +
                         std::to_string(k));
    out[k].data += coef * grads[k].data;
  }
  return out;
}

FdCheckResult finite_diff_check(const std::vector<Spectrogram>& xbar_t,
                                const std::vector<Denoiser*>& denoisers,
                                int t, const MultiSpectrogram& mixture,
                                const ScmField& inv_scm,
                                const GuidanceConfig& cfg, int n_probes,
                                double h, std::uint64_t probe_seed) {
  if (n_probes < 1) throw InvalidInput("finite_diff_check: n_probes < 1");
  if (!(h > 0.0)) throw InvalidInput("finite_diff_check: step must be > 0");
  const std::size_t K = xbar_t.size();
  const Schedule& sched = denoisers.at(0)->schedule();

  GuidanceReport base_report;
  std::vector<Spectrogram> grads = likelihood_grad(
      xbar_t, denoisers, t, mixture, inv_scm, cfg, &base_report);

  // Frozen pieces of the objective, per grad_mode (see header).
  std::vector<Spectrogram> base_eps(K), base_x0(K);
  std::vector<AtfFilter> base_filters(K);
  std::vector<MultiSpectrogram> base_images(K);
  for (std::size_t k = 0; k < K; ++k) {
    base_eps[k] = denoisers[k]->estimate_noise(xbar_t[k], t);
    base_x0[k] = decompress(one_step_denoise(xbar_t[k], base_eps[k], t, sched));
    base_filters[k] = fcp_estimate(base_x0[k], mixture, cfg.fcp);
    base_images[k] = apply_atf(base_x0[k], base_filters[k]);
  }

  // Objective with only source k changed; other sources' images stay at
  // their base values.
  auto objective = [&](std::size_t k, const Spectrogram& xk) -> double {
    Spectrogram xbar0 =
        cfg.grad_mode == GradMode::kFullVjp
            ? one_step_denoise(xk, denoisers[k]->estimate_noise(xk, t), t,
                               sched)
            : one_step_denoise(xk, base_eps[k], t, sched);
    Spectrogram x0k = decompress(xbar0);
    const AtfFilter hk = cfg.differentiate_through_fcp
                             ? fcp_estimate(x0k, mixture, cfg.fcp)
                             : base_filters[k];
    MultiSpectrogram image_k = apply_atf(x0k, hk);
    MultiSpectrogram n = mixture;
    for (std::size_t j = 0; j < K; ++j) {
      const MultiSpectrogram& img = (j == k) ? image_k : base_images[j];
      for (int c = 0; c < n.num_channels(); ++c)
        n.channels[static_cast<std::size_t>(c)].data -=
            img.channels[static_cast<std::size_t>(c)].data;
    }
    MultiSpectrogram q = apply_field(inv_scm, n);
    return real_inner(n, q);
  };

  const double f0 = objective(0, xbar_t[0]);
  const double denom_floor = 1e-9 * (1.0 + std::abs(f0));

  std::mt19937_64 pick(mix64(probe_seed));
  FdCheckResult res;
  res.probes = n_probes;
  double err_sum = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    const std::size_t k = static_cast<std::size_t>(pick() % K);
    const int F = xbar_t[k].bins();
    const int L = xbar_t[k].frames();
    const int f = static_cast<int>(pick() % static_cast<std::uint64_t>(F));
    const int l = static_cast<int>(pick() % static_cast<std::uint64_t>(L));
    const bool imag_part = (pick() & 1u) != 0;

    Spectrogram xp = xbar_t[k];
    Spectrogram xm = xbar_t[k];
    const cplx v = xp.data(f, l);
    if (imag_part) {
      xp.data(f, l) = cplx(v.real(), v.imag() + h);
      xm.data(f, l) = cplx(v.real(), v.imag() - h);
    } else {
      xp.data(f, l) = cplx(v.real() + h, v.imag());
      xm.data(f, l) = cplx(v.real() - h, v.imag());
    }
    const double fd = (objective(k, xp) - objective(k, xm)) / (2.0 * h);
    // grads hold G = -1/2 grad f, so grad f = -2 G.
    const cplx gv = grads[k].data(f, l);
    const double an = -2.0 * (imag_part ? gv.imag() : gv.real());
    const double denom =
        std::max({std::abs(fd), std::abs(an), denom_floor});
    const double rel = std::abs(fd - an) / denom;
    res.max_rel_err = std::max(res.max_rel_err, rel);
    err_sum += rel;
  }
  res.mean_rel_err = err_sum / n_probes;
  return res;
}

}  // namespace uadps
