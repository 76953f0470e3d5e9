// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/fcp.hpp"

#include <Eigen/Cholesky>
#include <atomic>
#include <cmath>

#include "uadps/parallel.hpp"

namespace uadps {

namespace {

// Ridge scale and refinement policy for the per-frequency normal
// equations. Refinement iterates h += (A + rI)^-1 (b - A h) against the
// unridged Gram; each pass shrinks the error by roughly r / lambda_min,
// so well-conditioned bins converge in one or two passes.
constexpr double kRidgeScale = 1e-8;
constexpr double kRefineTol = 1e-11;  // on ||B - A H||_F / ||B||_F
constexpr int kMaxRefine = 8;

// Builds the lagged-source matrix S(l, j) = x[l - (j - future)] with zero
// padding outside [0, L).
void build_delay_matrix(const Eigen::VectorXcd& x, int n_taps, int future,
                        Eigen::MatrixXcd* s) {
  const int L = static_cast<int>(x.size());
  s->setZero(L, n_taps);
  for (int j = 0; j < n_taps; ++j) {
    const int d = j - future;  // frame delay of this tap
    const int lo = std::max(0, d);
    const int hi = std::min(L, L + d);
    if (hi <= lo) continue;
    s->col(j).segment(lo, hi - lo) = x.segment(lo - d, hi - lo);
  }
}

}  // namespace

Eigen::MatrixXd fcp_weights(const MultiSpectrogram& target, double gamma) {
  target.check_consistent("fcp_weights");
  if (gamma < 0.0) throw InvalidInput("fcp_weights: gamma must be >= 0");
  const int F = target.bins();
  const int L = target.frames();
  const int C = target.num_channels();
  Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(F, L);
  for (int c = 0; c < C; ++c)
    lam += target.channels[static_cast<std::size_t>(c)].data.cwiseAbs2();
  lam /= static_cast<double>(C);
  const double peak = lam.maxCoeff();
  if (peak <= 0.0 && gamma == 0.0)
    throw DegenerateWeights("fcp_weights: all-zero target with gamma == 0");
  lam.array() += gamma * peak;
  return lam;
}

AtfFilter fcp_estimate(const Spectrogram& source,
                       const MultiSpectrogram& target, const FcpConfig& cfg,
                       FcpStats* stats) {
  target.check_consistent("fcp_estimate");
  const int F = source.bins();
  const int L = source.frames();
  const int C = target.num_channels();
  if (target.bins() != F || target.frames() != L)
    throw InvalidInput("fcp_estimate: source/target shape mismatch");
  if (cfg.n_taps < 1) throw InvalidInput("fcp_estimate: n_taps must be >= 1");
  if (cfg.causal_offset < 0 || cfg.causal_offset >= cfg.n_taps)
    throw InvalidInput("fcp_estimate: causal_offset out of [0, n_taps)");
  const int N = cfg.n_taps;

  const Eigen::MatrixXd lam = fcp_weights(target, cfg.gamma);
  if (!(lam.minCoeff() > 0.0))
    throw DegenerateWeights("fcp_estimate: non-positive weights; "
                            "use gamma > 0 or a non-degenerate target");

  AtfFilter filter;
  filter.n_taps = N;
  filter.future_taps = cfg.causal_offset;
  filter.taps.assign(static_cast<std::size_t>(C),
                     Eigen::MatrixXcd::Zero(N, F));

  std::atomic<int> failures{0};
  parallel_for(0, F, [&](int f) {
    const Eigen::VectorXcd x = source.data.row(f).transpose();
    Eigen::MatrixXcd s;
    build_delay_matrix(x, N, cfg.causal_offset, &s);

    // sqrt-weighted copies: rows scaled by 1/sqrt(lambda).
    Eigen::VectorXd sw = lam.row(f).transpose().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXcd sws = sw.asDiagonal() * s;
    Eigen::MatrixXcd y(L, C);
    for (int c = 0; c < C; ++c)
      y.col(c) =
          sw.asDiagonal() *
          target.channels[static_cast<std::size_t>(c)].data.row(f).transpose();

    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(N, N);
    a.selfadjointView<Eigen::Lower>().rankUpdate(sws.adjoint());
    Eigen::MatrixXcd afull = a.selfadjointView<Eigen::Lower>();
    Eigen::MatrixXcd b = sws.adjoint() * y;

    const double tr = afull.real().trace();
    if (!(tr > 0.0)) {
      // Silent source at this frequency: the zero filter is the LS
      // solution (b is zero too); a non-finite trace counts as a failure.
      if (!std::isfinite(tr)) failures.fetch_add(1);
      return;
    }

    Eigen::MatrixXcd ar = afull;
    ar.diagonal().array() += kRidgeScale * tr / N;
    Eigen::LLT<Eigen::MatrixXcd> llt(ar);
    if (llt.info() != Eigen::Success) {
      failures.fetch_add(1);
      return;
    }

    Eigen::MatrixXcd h = llt.solve(b);
    const double bnorm = b.norm();
    if (bnorm > 0.0) {
      for (int it = 0; it < kMaxRefine; ++it) {
        Eigen::MatrixXcd r = b - afull.selfadjointView<Eigen::Lower>() * h;
        if (r.norm() <= kRefineTol * bnorm) break;
        h += llt.solve(r);
      }
    }
    if (!h.allFinite()) {
      failures.fetch_add(1);
      return;
    }
    for (int c = 0; c < C; ++c)
      filter.taps[static_cast<std::size_t>(c)].col(f) = h.col(c);
  });

  if (stats) stats->solve_failures = failures.load();
  return filter;
}

MultiSpectrogram apply_atf(const Spectrogram& source,
                           const AtfFilter& filter) {
  const int F = source.bins();
  const int L = source.frames();
  const int N = filter.n_taps;
  const int C = filter.num_channels();
  if (C == 0) throw InvalidInput("apply_atf: empty filter");
  if (filter.bins() != F)
    throw InvalidInput("apply_atf: filter/source bin mismatch");

  MultiSpectrogram out;
  out.channels.assign(static_cast<std::size_t>(C), source.zeros_like());

  parallel_for(0, F, [&](int f) {
    const Eigen::VectorXcd x = source.data.row(f).transpose();
    Eigen::VectorXcd acc(L);
    for (int c = 0; c < C; ++c) {
      acc.setZero();
      const Eigen::MatrixXcd& taps = filter.taps[static_cast<std::size_t>(c)];
      for (int j = 0; j < N; ++j) {
        const cplx h = taps(j, f);
        if (h == cplx(0.0, 0.0)) continue;
        const int d = j - filter.future_taps;
        const int lo = std::max(0, d);
        const int hi = std::min(L, L + d);
        if (hi <= lo) continue;
        acc.segment(lo, hi - lo) += h * x.segment(lo - d, hi - lo);
      }
      out.channels[static_cast<std::size_t>(c)].data.row(f) = acc.transpose();
    }
  });
  return out;
}

Spectrogram apply_atf_adjoint(const MultiSpectrogram& residual,
                              const AtfFilter& filter) {
  residual.check_consistent("apply_atf_adjoint");
  const int F = residual.bins();
  const int L = residual.frames();
  const int N = filter.n_taps;
  const int C = filter.num_channels();
  if (C != residual.num_channels())
    throw InvalidInput("apply_atf_adjoint: channel count mismatch");
  if (filter.bins() != F)
    throw InvalidInput("apply_atf_adjoint: filter/residual bin mismatch");

  Spectrogram out = residual.channels[0].zeros_like();
  parallel_for(0, F, [&](int f) {
    Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(L);
    for (int c = 0; c < C; ++c) {
      const Eigen::VectorXcd r =
          residual.channels[static_cast<std::size_t>(c)].data.row(f).transpose();
      const Eigen::MatrixXcd& taps = filter.taps[static_cast<std::size_t>(c)];
      for (int j = 0; j < N; ++j) {
        const cplx h = std::conj(taps(j, f));
        if (h == cplx(0.0, 0.0)) continue;
        const int d = j - filter.future_taps;
        // out[l] += conj(h_j) * r[l + d] for l + d in [0, L)
        const int lo = std::max(0, -d);
        const int hi = std::min(L, L - d);
        if (hi <= lo) continue;
        acc.segment(lo, hi - lo) += h * r.segment(lo + d, hi - lo);
      }
    }
    out.data.row(f) = acc.transpose();
  });
  return out;
}

}  // namespace uadps
