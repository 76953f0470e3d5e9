// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/diffusion.hpp"

#include <cmath>

namespace uadps {

Schedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) throw InvalidInput("make_schedule: T must be >= 2");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
    throw InvalidInput("make_schedule: need 0 < beta_start < beta_end < 1");
  Schedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  s.sigma.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double b = beta_start + (beta_end - beta_start) * i / (T - 1);
    s.beta(i) = b;
    s.alpha(i) = 1.0 - b;
    const double ab_prev = prod;  // alpha_bar at t-1 (1 for t == 1)
    prod *= s.alpha(i);
    s.alpha_bar(i) = prod;
    // sigma_t^2 = (1 - ab_{t-1}) / (1 - ab_t) * beta_t; zero at t = 1.
    s.sigma(i) = std::sqrt((1.0 - ab_prev) / (1.0 - prod) * b);
  }
  return s;
}

void fill_standard_complex(Spectrogram* out, GaussianStream& rng) {
  const int F = out->bins();
  const int L = out->frames();
  for (int l = 0; l < L; ++l)
    for (int f = 0; f < F; ++f) {
      const double re = rng();
      const double im = rng();
      out->data(f, l) = cplx(re, im);
    }
}

Spectrogram forward_to_step(const Spectrogram& x0, int t, const Schedule& s,
                            GaussianStream& rng) {
  Spectrogram eps = x0.zeros_like();
  fill_standard_complex(&eps, rng);
  return forward_to_step(x0, t, s, eps);
}

Spectrogram forward_to_step(const Spectrogram& x0, int t, const Schedule& s,
                            const Spectrogram& eps) {
  if (!x0.same_shape(eps))
    throw InvalidInput("forward_to_step: x0/eps shape mismatch");
  if (t < 1 || t > s.T)
    throw InvalidInput("forward_to_step: t out of range");
  const double ab = s.alpha_bar_at(t);
  Spectrogram out = x0;
  out.data = std::sqrt(ab) * x0.data + std::sqrt(1.0 - ab) * eps.data;
  return out;
}

Spectrogram prior_step(const Spectrogram& x_t, const Spectrogram& eps_hat,
                       int t, const Schedule& s, GaussianStream& rng) {
  if (t > 1) {
    Spectrogram z = x_t.zeros_like();
    fill_standard_complex(&z, rng);
    return prior_step(x_t, eps_hat, t, s, z);
  }
  // t == 1 is deterministic; do not touch the stream.
  return prior_step(x_t, eps_hat, t, s, x_t.zeros_like());
}

Spectrogram prior_step(const Spectrogram& x_t, const Spectrogram& eps_hat,
                       int t, const Schedule& s, const Spectrogram& z) {
  if (!x_t.same_shape(eps_hat) || !x_t.same_shape(z))
    throw InvalidInput("prior_step: shape mismatch");
  const double ab = s.alpha_bar_at(t);
  const double coef = s.beta_at(t) / std::sqrt(1.0 - ab);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(t));
  Spectrogram out = x_t;
  out.data = inv_sqrt_alpha * (x_t.data - coef * eps_hat.data);
  const double sig = s.sigma_at(t);
  if (sig > 0.0) out.data += sig * z.data;
  return out;
}

Spectrogram one_step_denoise(const Spectrogram& x_t,
                             const Spectrogram& eps_hat, int t,
                             const Schedule& s) {
  if (!x_t.same_shape(eps_hat))
    throw InvalidInput("one_step_denoise: shape mismatch");
  const double ab = s.alpha_bar_at(t);
  Spectrogram out = x_t;
  out.data = (x_t.data - std::sqrt(1.0 - ab) * eps_hat.data) / std::sqrt(ab);
  return out;
}

Spectrogram Denoiser::denoise(const Spectrogram& x_t, int t) {
  return one_step_denoise(x_t, estimate_noise(x_t, t), t, *sched_);
}

Spectrogram Denoiser::vjp(const Spectrogram&, int, const Spectrogram&) {
  throw CapabilityError("this denoiser does not provide a vjp");
}

OracleDenoiser::OracleDenoiser(Spectrogram x0_truth, const Schedule& sched)
    : Denoiser(sched), x0_(std::move(x0_truth)) {}

Spectrogram OracleDenoiser::estimate_noise(const Spectrogram& x_t, int t) {
  if (!x_t.same_shape(x0_))
    throw InvalidInput("oracle denoiser: x_t does not match truth shape");
  const double ab = schedule().alpha_bar_at(t);
  if (!(ab < 1.0)) {
    return x_t.zeros_like();  // no noise was added; nothing to predict
  }
  Spectrogram out = x_t;
  out.data =
      (x_t.data - std::sqrt(ab) * x0_.data) / std::sqrt(1.0 - ab);
  return out;
}

Spectrogram OracleDenoiser::denoise(const Spectrogram& x_t, int t) {
  if (!x_t.same_shape(x0_))
    throw InvalidInput("oracle denoiser: x_t does not match truth shape");
  schedule().beta_at(t);  // range check only
  Spectrogram out = x_t;
  out.data = x0_.data;  // exact by definition of the oracle
  return out;
}

Spectrogram OracleDenoiser::vjp(const Spectrogram& x_t, int t,
                                const Spectrogram& cotangent) {
  if (!x_t.same_shape(cotangent))
    throw InvalidInput("oracle denoiser vjp: shape mismatch");
  const double ab = schedule().alpha_bar_at(t);
  Spectrogram out = cotangent;
  if (!(ab < 1.0)) {
    out.data.setZero();
    return out;
  }
  out.data = cotangent.data / std::sqrt(1.0 - ab);
  return out;
}

GaussianPriorDenoiser::GaussianPriorDenoiser(double variance,
                                             const Schedule& sched)
    : Denoiser(sched), variance_(variance) {
  if (!(variance >= 0.0) || !std::isfinite(variance))
    throw InvalidInput("gaussian prior denoiser: variance must be finite and >= 0");
}

Spectrogram GaussianPriorDenoiser::estimate_noise(const Spectrogram& x_t,
                                                  int t) {
  const double ab = schedule().alpha_bar_at(t);
  const double scale = std::sqrt(1.0 - ab) / (ab * variance_ + 1.0 - ab);
  Spectrogram out = x_t;
  out.data = scale * x_t.data;
  return out;
}

Spectrogram GaussianPriorDenoiser::denoise(const Spectrogram& x_t, int t) {
  const double ab = schedule().alpha_bar_at(t);
  const double scale =
      std::sqrt(ab) * variance_ / (ab * variance_ + 1.0 - ab);
  Spectrogram out = x_t;
  out.data = scale * x_t.data;
  return out;
}

Spectrogram GaussianPriorDenoiser::vjp(const Spectrogram& x_t, int t,
                                       const Spectrogram& cotangent) {
  if (!x_t.same_shape(cotangent))
    throw InvalidInput("gaussian prior denoiser vjp: shape mismatch");
  const double ab = schedule().alpha_bar_at(t);
  const double scale = std::sqrt(1.0 - ab) / (ab * variance_ + 1.0 - ab);
  Spectrogram out = cotangent;
  out.data = scale * cotangent.data;
  return out;
}

}  // namespace uadps
