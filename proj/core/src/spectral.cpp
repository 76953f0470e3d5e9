// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/spectral.hpp"

#include <cmath>

#include "uadps/fft.hpp"

namespace uadps {

void MultiSpectrogram::check_consistent(const char* what) const {
  if (channels.empty())
    throw InvalidInput(std::string(what) + ": no channels");
  for (std::size_t c = 1; c < channels.size(); ++c) {
    if (!channels[0].same_format(channels[c]))
      throw InvalidInput(std::string(what) + ": channel " + std::to_string(c) +
                         " disagrees on shape or STFT format");
  }
}

std::vector<double> sqrt_hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    w[static_cast<std::size_t>(k)] =
        std::sqrt(0.5 - 0.5 * std::cos(2.0 * M_PI * k / n));
  return w;
}

Spectrogram stft(const std::vector<double>& signal, int fft_size, int hop,
                 bool keep_dc, double sample_rate) {
  if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0)
    throw InvalidInput("stft: fft_size must be a power of two >= 4");
  if (hop < 1 || hop > fft_size)
    throw InvalidInput("stft: hop must be in [1, fft_size]");
  const int len = static_cast<int>(signal.size());
  if (len < fft_size)
    throw InvalidInput("stft: signal shorter than one frame (" +
                       std::to_string(len) + " < " + std::to_string(fft_size) +
                       ")");
  for (double v : signal)
    if (!std::isfinite(v)) throw InvalidInput("stft: non-finite sample");

  const int frames = 1 + (len - fft_size + hop - 1) / hop;
  const int half = fft_size / 2;
  const int bins = keep_dc ? half + 1 : half;

  Spectrogram out;
  out.fft_size = fft_size;
  out.hop = hop;
  out.sample_rate = sample_rate;
  out.keep_dc = keep_dc;
  out.data.resize(bins, frames);

  const std::vector<double> win = sqrt_hann(fft_size);
  const Radix2Fft fft(fft_size);
  std::vector<cplx> buf(static_cast<std::size_t>(fft_size));
  for (int m = 0; m < frames; ++m) {
    const int start = m * hop;
    for (int k = 0; k < fft_size; ++k) {
      const int idx = start + k;
      const double s = idx < len ? signal[static_cast<std::size_t>(idx)] : 0.0;
      buf[static_cast<std::size_t>(k)] = s * win[static_cast<std::size_t>(k)];
    }
    fft.forward(buf.data());
    if (keep_dc) {
      for (int k = 0; k <= half; ++k)
        out.data(k, m) = buf[static_cast<std::size_t>(k)];
    } else {
      for (int k = 1; k <= half; ++k)
        out.data(k - 1, m) = buf[static_cast<std::size_t>(k)];
    }
  }
  return out;
}

std::vector<double> istft(const Spectrogram& spec, int out_len) {
  const int fft_size = spec.fft_size;
  const int hop = spec.hop;
  const int half = fft_size / 2;
  const int frames = spec.frames();
  const int expected_bins = spec.keep_dc ? half + 1 : half;
  if (spec.bins() != expected_bins)
    throw InvalidInput("istft: bins() inconsistent with fft_size/keep_dc");
  if (frames < 1) throw InvalidInput("istft: empty spectrogram");
  const int cover = (frames - 1) * hop + fft_size;
  if (out_len <= 0 || out_len > cover)
    throw InvalidInput("istft: out_len outside (0, covered range]");
  if (!spec.all_finite()) throw InvalidInput("istft: non-finite bins");

  const std::vector<double> win = sqrt_hann(fft_size);
  const Radix2Fft fft(fft_size);

  std::vector<double> acc(static_cast<std::size_t>(cover), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(cover), 0.0);
  std::vector<cplx> buf(static_cast<std::size_t>(fft_size));
  for (int m = 0; m < frames; ++m) {
    // Rebuild the full conjugate-symmetric spectrum of this frame. The
    // imaginary residue of the inverse transform is only nonzero through
    // Im(DC)/Im(Nyquist) and rounding, and is discarded.
    buf[0] = spec.keep_dc ? spec.data(0, m) : cplx(0.0, 0.0);
    for (int k = 1; k <= half; ++k)
      buf[static_cast<std::size_t>(k)] =
          spec.data(spec.keep_dc ? k : k - 1, m);
    for (int k = half + 1; k < fft_size; ++k)
      buf[static_cast<std::size_t>(k)] =
          std::conj(buf[static_cast<std::size_t>(fft_size - k)]);
    fft.inverse(buf.data());
    const int start = m * hop;
    for (int k = 0; k < fft_size; ++k) {
      const double w = win[static_cast<std::size_t>(k)];
      acc[static_cast<std::size_t>(start + k)] +=
          w * buf[static_cast<std::size_t>(k)].real();
      wsum[static_cast<std::size_t>(start + k)] += w * w;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(out_len), 0.0);
  for (int n = 0; n < out_len; ++n) {
    const double d = wsum[static_cast<std::size_t>(n)];
    if (d > 1e-8) out[static_cast<std::size_t>(n)] = acc[static_cast<std::size_t>(n)] / d;
  }
  return out;
}

Spectrogram compress(const Spectrogram& spec) {
  if (!spec.all_finite()) throw InvalidInput("compress: non-finite bins");
  Spectrogram out = spec;
  cplx* p = out.data.data();
  const Eigen::Index n = out.data.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = std::abs(p[i]);
    p[i] = m > 0.0 ? p[i] / std::sqrt(m) : cplx(0.0, 0.0);
  }
  return out;
}

Spectrogram decompress(const Spectrogram& spec) {
  if (!spec.all_finite()) throw InvalidInput("decompress: non-finite bins");
  Spectrogram out = spec;
  cplx* p = out.data.data();
  const Eigen::Index n = out.data.size();
  for (Eigen::Index i = 0; i < n; ++i) p[i] *= std::abs(p[i]);
  return out;
}

Spectrogram decompress_vjp(const Spectrogram& x, const Spectrogram& cotangent,
                           double eps_mag) {
  if (!x.same_shape(cotangent))
    throw InvalidInput("decompress_vjp: point/cotangent shape mismatch");
  if (eps_mag <= 0.0) throw InvalidInput("decompress_vjp: eps_mag must be > 0");
  Spectrogram out = x;
  const cplx* px = x.data.data();
  const cplx* pg = cotangent.data.data();
  cplx* po = out.data.data();
  const Eigen::Index n = out.data.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = std::max(std::abs(px[i]), eps_mag);
    const double inner =
        px[i].real() * pg[i].real() + px[i].imag() * pg[i].imag();
    po[i] = r * pg[i] + (inner / r) * px[i];
  }
  return out;
}

void split_dc(const Spectrogram& spec, Eigen::VectorXcd* dc_row,
              Spectrogram* body) {
  if (!spec.keep_dc) throw InvalidInput("split_dc: spectrogram has no DC row");
  *dc_row = spec.data.row(0).transpose();
  body->fft_size = spec.fft_size;
  body->hop = spec.hop;
  body->sample_rate = spec.sample_rate;
  body->keep_dc = false;
  body->data = spec.data.bottomRows(spec.data.rows() - 1);
}

Spectrogram merge_dc(const Spectrogram& body, const Eigen::VectorXcd& dc_row) {
  if (body.keep_dc) throw InvalidInput("merge_dc: body already has a DC row");
  if (dc_row.size() != body.frames())
    throw InvalidInput("merge_dc: DC row length != frames");
  Spectrogram out;
  out.fft_size = body.fft_size;
  out.hop = body.hop;
  out.sample_rate = body.sample_rate;
  out.keep_dc = true;
  out.data.resize(body.data.rows() + 1, body.data.cols());
  out.data.row(0) = dc_row.transpose();
  out.data.bottomRows(body.data.rows()) = body.data;
  return out;
}

}  // namespace uadps
