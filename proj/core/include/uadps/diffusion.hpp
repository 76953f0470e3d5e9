// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_DIFFUSION_HPP
#define UADPS_DIFFUSION_HPP

#include <Eigen/Dense>
#include <memory>
#include <string>

#include "uadps/rng.hpp"
#include "uadps/spectral.hpp"

namespace uadps {

// DDPM variance schedule. Arrays are indexed by step t in [1, T] via the
// *_at accessors (beta_at(1) is the first step); alpha_bar_at(0) == 1 by
// convention, which makes sigma_at(1) == 0: the last reverse step is
// deterministic.
struct Schedule {
  int T = 0;
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  Eigen::VectorXd alpha_bar;
  Eigen::VectorXd sigma;

  double beta_at(int t) const { return beta(check(t) - 1); }
  double alpha_at(int t) const { return alpha(check(t) - 1); }
  double sigma_at(int t) const { return sigma(check(t) - 1); }
  double alpha_bar_at(int t) const {
    if (t == 0) return 1.0;
    return alpha_bar(check(t) - 1);
  }

 private:
  int check(int t) const {
    if (t < 1 || t > T)
      throw InvalidInput("schedule: step " + std::to_string(t) +
                         " outside [1, " + std::to_string(T) + "]");
    return t;
  }
};

// Linear beta schedule. pre: T >= 2, 0 < beta_start < beta_end < 1.
Schedule make_schedule(int T = 1000, double beta_start = 1e-4,
                       double beta_end = 0.02);

// Fills a spectrogram with standard complex noise: real and imaginary
// parts are independent N(0,1) draws, i.e. CN(0, 2) per bin. Draw order
// is fixed (frame-major, bins inner), so a given stream state always
// produces the same tensor.
void fill_standard_complex(Spectrogram* out, GaussianStream& rng);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps. The rng variant
// draws eps itself; the injected variant is for tests and replay.
Spectrogram forward_to_step(const Spectrogram& x0, int t, const Schedule& s,
                            GaussianStream& rng);
Spectrogram forward_to_step(const Spectrogram& x0, int t, const Schedule& s,
                            const Spectrogram& eps);

// One reverse step:
//   x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat)
//             / sqrt(alpha_t) + sigma_t * z.
// At t == 1 no noise is added (sigma_1 == 0) and the rng is not touched.
Spectrogram prior_step(const Spectrogram& x_t, const Spectrogram& eps_hat,
                       int t, const Schedule& s, GaussianStream& rng);
Spectrogram prior_step(const Spectrogram& x_t, const Spectrogram& eps_hat,
                       int t, const Schedule& s, const Spectrogram& z);

// MMSE clean estimate from a noisy state and a noise prediction:
//   x0_hat = (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t).
Spectrogram one_step_denoise(const Spectrogram& x_t,
                             const Spectrogram& eps_hat, int t,
                             const Schedule& s);

// A diffusion prior: predicts the injected noise from a noisy state.
// denoise() is the MMSE clean estimate; the default composes
// one_step_denoise with estimate_noise, but implementations that know the
// answer in closed form override it. vjp() is the cotangent pullback
// through estimate_noise in the real-pair sense; only denoisers with
// has_vjp() provide it.
class Denoiser {
 public:
  explicit Denoiser(const Schedule& sched) : sched_(&sched) {}
  virtual ~Denoiser() = default;

  const Schedule& schedule() const { return *sched_; }

  virtual Spectrogram estimate_noise(const Spectrogram& x_t, int t) = 0;
  virtual Spectrogram denoise(const Spectrogram& x_t, int t);
  virtual bool has_vjp() const { return false; }
  virtual Spectrogram vjp(const Spectrogram& x_t, int t,
                          const Spectrogram& cotangent);

 private:
  const Schedule* sched_;
};

// Test double that inverts the forward equation with the known clean
// signal: eps_hat = (x_t - sqrt(alpha_bar) x0) / sqrt(1 - alpha_bar).
// denoise() returns the stored truth verbatim, so the forward-then-
// denoise identity is exact at the bit level.
class OracleDenoiser : public Denoiser {
 public:
  OracleDenoiser(Spectrogram x0_truth, const Schedule& sched);

  Spectrogram estimate_noise(const Spectrogram& x_t, int t) override;
  Spectrogram denoise(const Spectrogram& x_t, int t) override;
  bool has_vjp() const override { return true; }
  Spectrogram vjp(const Spectrogram& x_t, int t,
                  const Spectrogram& cotangent) override;

  const Spectrogram& truth() const { return x0_; }

 private:
  Spectrogram x0_;
};

// Closed-form denoiser for a zero-mean Gaussian prior with per-component
// variance v (each of re/im ~ N(0, v) independently):
//   x0_hat = sqrt(ab) v / (ab v + 1 - ab) * x_t,
//   eps_hat = sqrt(1 - ab) / (ab v + 1 - ab) * x_t.
// Linear in x_t, so its vjp is exact: the same real scalar.
class GaussianPriorDenoiser : public Denoiser {
 public:
  GaussianPriorDenoiser(double variance, const Schedule& sched);

  Spectrogram estimate_noise(const Spectrogram& x_t, int t) override;
  Spectrogram denoise(const Spectrogram& x_t, int t) override;
  bool has_vjp() const override { return true; }
  Spectrogram vjp(const Spectrogram& x_t, int t,
                  const Spectrogram& cotangent) override;

  double variance() const { return variance_; }

 private:
  double variance_;
};

// Denoiser backed by a child process speaking a framed binary protocol on
// stdin/stdout (see extern_denoiser.cpp for the frame layout). Spawned
// lazily on first use; any protocol violation, timeout (5 s per I/O
// direction), or child death raises DenoiserProtocolError. No vjp.
class ExternalDenoiser : public Denoiser {
 public:
  ExternalDenoiser(std::string command, const Schedule& sched);
  ~ExternalDenoiser() override;

  ExternalDenoiser(const ExternalDenoiser&) = delete;
  ExternalDenoiser& operator=(const ExternalDenoiser&) = delete;

  Spectrogram estimate_noise(const Spectrogram& x_t, int t) override;

 private:
  void spawn();
  void shutdown();

  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

}  // namespace uadps

#endif  // UADPS_DIFFUSION_HPP
