// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_SCM_HPP
#define UADPS_SCM_HPP

#include <Eigen/Dense>
#include <vector>

#include "uadps/fcp.hpp"
#include "uadps/spectral.hpp"

namespace uadps {

// Per-(frame, frequency) C x C Hermitian matrix field. Blocks are stored
// contiguously, frame-major: block (l, f) lives at ((l * bins) + f) * C*C.
struct ScmField {
  int channels = 0;
  int bins = 0;
  int frames = 0;
  double eta = 0.95;         // EMA forgetting factor used to build it
  double load_delta = 1e-4;  // relative diagonal loading for inversion
  std::vector<cplx> data;

  void resize(int c, int f, int l) {
    channels = c;
    bins = f;
    frames = l;
    data.assign(static_cast<std::size_t>(c) * c * f * l, cplx(0.0, 0.0));
  }

  Eigen::Map<Eigen::MatrixXcd> at(int l, int f) {
    return Eigen::Map<Eigen::MatrixXcd>(
        data.data() +
            (static_cast<std::size_t>(l) * bins + f) * channels * channels,
        channels, channels);
  }
  Eigen::Map<const Eigen::MatrixXcd> at(int l, int f) const {
    return Eigen::Map<const Eigen::MatrixXcd>(
        data.data() +
            (static_cast<std::size_t>(l) * bins + f) * channels * channels,
        channels, channels);
  }
};

// Residual after subtracting every source's filtered image from the
// mixture: N = Y - sum_k apply_atf(source_k, filter_k).
MultiSpectrogram estimate_noise(const MultiSpectrogram& mixture,
                                const std::vector<Spectrogram>& sources,
                                const std::vector<AtfFilter>& filters);

// First-order recursive (EMA) covariance per frequency:
//   cov(l) = eta * cov(l-1) + (1 - eta) * n(l) n(l)^H,
// initialized with cov(-1) = n(0) n(0)^H so cov(0) is the first outer
// product itself. pre: 0 <= eta < 1.
ScmField scm_ema(const MultiSpectrogram& noise, double eta);

// Blockwise inverse with relative diagonal loading:
//   inv(l,f) = (cov(l,f) + (load_delta * trace / C + eps_abs) I)^-1,
// eps_abs = 1e-10. Inverses are re-Hermitianized so downstream quadratic
// forms stay real up to rounding.
ScmField scm_inverse(const ScmField& field);

// sum_{l,f} n(l,f)^H inv(l,f) n(l,f), returned as its real part. The
// accumulated imaginary residue must satisfy |Im| < 1e-8 |Re| + 1e-12,
// otherwise NumericalError is thrown (the field was not Hermitian).
double quadratic_form(const MultiSpectrogram& noise, const ScmField& inv);

// Per-bin matrix-vector product q(l,f) = field(l,f) * n(l,f); used to
// share the weighted residual across guidance terms.
MultiSpectrogram apply_field(const ScmField& field,
                             const MultiSpectrogram& noise);

}  // namespace uadps

#endif  // UADPS_SCM_HPP
