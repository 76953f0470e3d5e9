// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/scm.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "uadps/parallel.hpp"

namespace uadps {

namespace {
constexpr double kLoadEpsAbs = 1e-10;

void gather_bin(const MultiSpectrogram& x, int l, int f, Eigen::VectorXcd* v) {
  const int C = x.num_channels();
  for (int c = 0; c < C; ++c)
    (*v)(c) = x.channels[static_cast<std::size_t>(c)].data(f, l);
}
}  // namespace

MultiSpectrogram estimate_noise(const MultiSpectrogram& mixture,
                                const std::vector<Spectrogram>& sources,
                                const std::vector<AtfFilter>& filters) {
  mixture.check_consistent("estimate_noise");
  if (sources.size() != filters.size())
    throw InvalidInput("estimate_noise: sources/filters count mismatch");
  MultiSpectrogram out = mixture;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const Spectrogram& src = sources[k];
    if (src.bins() != mixture.bins() || src.frames() != mixture.frames())
      throw InvalidInput("estimate_noise: source " + std::to_string(k) +
                         " shape mismatch");
    MultiSpectrogram image = apply_atf(src, filters[k]);
    if (image.num_channels() != mixture.num_channels())
      throw InvalidInput("estimate_noise: filter " + std::to_string(k) +
                         " channel mismatch");
    for (int c = 0; c < mixture.num_channels(); ++c)
      out.channels[static_cast<std::size_t>(c)].data -=
          image.channels[static_cast<std::size_t>(c)].data;
  }
  return out;
}

ScmField scm_ema(const MultiSpectrogram& noise, double eta) {
  noise.check_consistent("scm_ema");
  if (!(eta >= 0.0 && eta < 1.0))
    throw InvalidInput("scm_ema: eta must be in [0, 1)");
  const int C = noise.num_channels();
  const int F = noise.bins();
  const int L = noise.frames();
  ScmField field;
  field.eta = eta;
  field.resize(C, F, L);

  parallel_for(0, F, [&](int f) {
    Eigen::VectorXcd n(C);
    Eigen::MatrixXcd prev(C, C);
    for (int l = 0; l < L; ++l) {
      gather_bin(noise, l, f, &n);
      Eigen::MatrixXcd outer = n * n.adjoint();
      auto cov = field.at(l, f);
      if (l == 0) {
        // cov(-1) is defined as the first outer product, so the recursion
        // gives cov(0) = outer exactly.
        cov = outer;
      } else {
        cov = eta * prev + (1.0 - eta) * outer;
      }
      prev = cov;
    }
  });
  return field;
}

ScmField scm_inverse(const ScmField& field) {
  const int C = field.channels;
  if (C < 1) throw InvalidInput("scm_inverse: empty field");
  ScmField inv = field;
  parallel_for(0, field.bins, [&](int f) {
    Eigen::MatrixXcd loaded(C, C);
    for (int l = 0; l < field.frames; ++l) {
      loaded = field.at(l, f);
      if (!loaded.allFinite())
        throw InvalidInput("scm_inverse: non-finite slice");
      const double tr = loaded.real().trace();
      loaded.diagonal().array() +=
          field.load_delta * tr / C + kLoadEpsAbs;
      Eigen::MatrixXcd m = loaded.inverse();
      // Kill the asymmetric rounding so quadratic forms stay real.
      inv.at(l, f) = 0.5 * (m + m.adjoint()).eval();
    }
  });
  return inv;
}

double quadratic_form(const MultiSpectrogram& noise, const ScmField& inv) {
  noise.check_consistent("quadratic_form");
  const int C = noise.num_channels();
  const int F = noise.bins();
  const int L = noise.frames();
  if (inv.channels != C || inv.bins != F || inv.frames != L)
    throw InvalidInput("quadratic_form: field/noise shape mismatch");

  // Per-frequency partials summed in a fixed order so the result does not
  // depend on the worker count.
  std::vector<cplx> partial(static_cast<std::size_t>(F), cplx(0.0, 0.0));
  parallel_for(0, F, [&](int f) {
    Eigen::VectorXcd n(C);
    cplx acc(0.0, 0.0);
    for (int l = 0; l < L; ++l) {
      gather_bin(noise, l, f, &n);
      acc += n.dot(inv.at(l, f) * n);  // Eigen dot conjugates the lhs
    }
    partial[static_cast<std::size_t>(f)] = acc;
  });
  cplx total(0.0, 0.0);
  for (int f = 0; f < F; ++f) total += partial[static_cast<std::size_t>(f)];

  if (!(std::abs(total.imag()) < 1e-8 * std::abs(total.real()) + 1e-12))
    throw NumericalError("quadratic_form: imaginary residue too large; "
                         "field is not Hermitian");
  return total.real();
}

MultiSpectrogram apply_field(const ScmField& field,
                             const MultiSpectrogram& noise) {
  noise.check_consistent("apply_field");
  const int C = noise.num_channels();
  const int F = noise.bins();
  const int L = noise.frames();
  if (field.channels != C || field.bins != F || field.frames != L)
    throw InvalidInput("apply_field: field/noise shape mismatch");
  MultiSpectrogram out = noise;
  parallel_for(0, F, [&](int f) {
    Eigen::VectorXcd n(C), q(C);
    for (int l = 0; l < L; ++l) {
      gather_bin(noise, l, f, &n);
      q.noalias() = field.at(l, f) * n;
      for (int c = 0; c < C; ++c)
        out.channels[static_cast<std::size_t>(c)].data(f, l) = q(c);
    }
  });
  return out;
}

}  // namespace uadps
