// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/scene.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uadps/errors.hpp"
#include "uadps/rng.hpp"
#include "uadps/wav.hpp"

namespace uadps {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Harmonic source with pitch drift, vibrato, syllabic AM and voiced/pause
// gating. Deterministic given the stream; first segment is always voiced
// so the clip never comes out silent. Peak-normalized to 0.5.
std::vector<double> synth_speech_like(GaussianStream& g, int n, double sr) {
  const int kHarm = 10;
  const double f0 = 110.0 + 170.0 * g.uniform01();
  const double drift = (g.uniform01() - 0.5) * 0.3;
  const double vib_rate = 3.0 + 3.0 * g.uniform01();
  const double vib_depth = 0.02 + 0.02 * g.uniform01();
  const double am_rate = 2.0 + 2.5 * g.uniform01();
  const double am_phase = 2.0 * kPi * g.uniform01();
  std::vector<double> amp(kHarm), phase(kHarm);
  for (int h = 0; h < kHarm; h++) {
    amp[h] = std::pow(h + 1.0, -1.1) * (0.5 + g.uniform01());
    phase[h] = 2.0 * kPi * g.uniform01();
  }
  // voiced/pause gate with cosine ramps at the boundaries
  std::vector<double> env(n, 0.0);
  {
    std::vector<int> edges;  // segment start positions
    std::vector<int> state;  // 1 = voiced
    int pos = 0;
    bool voiced = true;
    while (pos < n) {
      edges.push_back(pos);
      state.push_back(voiced ? 1 : 0);
      double len_s = voiced ? 0.15 + 0.25 * g.uniform01()
                            : 0.06 + 0.18 * g.uniform01();
      pos += std::max(1, static_cast<int>(len_s * sr));
      voiced = !voiced;
    }
    for (size_t s = 0; s < edges.size(); s++) {
      int beg = edges[s];
      int end = (s + 1 < edges.size()) ? edges[s + 1] : n;
      double val = state[s] ? 1.0 : 0.0;
      for (int i = beg; i < end; i++) env[i] = val;
    }
    const int ramp = std::max(1, static_cast<int>(0.016 * sr));
    for (size_t s = 1; s < edges.size(); s++) {
      int p = edges[s];
      double a = state[s - 1] ? 1.0 : 0.0;
      double b = state[s] ? 1.0 : 0.0;
      for (int i = 0; i < ramp && p + i < n; i++) {
        double c = 0.5 * (1.0 - std::cos(kPi * i / ramp));
        env[p + i] = a + (b - a) * c;
      }
    }
  }
  std::vector<double> out(n, 0.0);
  std::vector<double> theta(phase);
  double peak = 0.0;
  for (int i = 0; i < n; i++) {
    double t = i / sr;
    double inst = f0 * (1.0 + drift * (static_cast<double>(i) / n - 0.5)) *
                  (1.0 + vib_depth * std::sin(2.0 * kPi * vib_rate * t));
    double am = 1.0 + 0.25 * std::sin(2.0 * kPi * am_rate * t + am_phase);
    double acc = 0.0;
    for (int h = 0; h < kHarm; h++) {
      acc += amp[h] * std::sin(theta[h]);
      theta[h] += 2.0 * kPi * (h + 1.0) * inst / sr;
    }
    out[i] = env[i] * am * acc;
    peak = std::max(peak, std::abs(out[i]));
  }
  if (peak <= 0.0) throw NumericalError("synth produced a silent clip");
  for (double& v : out) v *= 0.5 / peak;
  return out;
}

// Random decaying STFT-domain ATF. The first tap has unit magnitude on
// every channel (exactly 1 on channel 0); later taps are complex gaussian
// with an exponential envelope.
AtfFilter random_atf(GaussianStream& g, int channels, int taps, int bins) {
  AtfFilter filt;
  filt.n_taps = taps;
  filt.future_taps = 0;
  filt.taps.resize(channels);
  const double tau = std::max(1.0, taps / 3.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int c = 0; c < channels; c++) {
    filt.taps[c].setZero(taps, bins);
    for (int j = 0; j < taps; j++) {
      for (int f = 0; f < bins; f++) {
        if (j == 0) {
          if (c == 0) {
            filt.taps[c](0, f) = 1.0;
          } else {
            double ph = 2.0 * kPi * g.uniform01();
            double mag = 0.7 + 0.3 * g.uniform01();
            filt.taps[c](0, f) = std::polar(mag, ph);
          }
        } else {
          double sigma = 0.35 * std::exp(-(j - 1.0) / tau);
          filt.taps[c](j, f) =
              sigma * inv_sqrt2 * std::complex<double>(g(), g());
        }
      }
    }
  }
  return filt;
}

double sinc(double x) { return std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x; }

// Unit-scale noise field of the requested kind; SNR scaling happens later.
MultiSpectrogram make_noise(const NoiseSpec& spec, const Spectrogram& like,
                            int channels, GaussianStream& g) {
  const int bins = like.bins();
  const int frames = like.frames();
  MultiSpectrogram noise;
  noise.channels.assign(channels, like.zeros_like());
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  switch (spec.kind) {
    case NoiseKind::kSpatiallyWhite: {
      if (!(spec.variance > 0.0))
        throw InvalidInput("noise variance must be positive");
      const double s = std::sqrt(spec.variance / 2.0);
      for (int c = 0; c < channels; c++)
        for (int l = 0; l < frames; l++)
          for (int f = 0; f < bins; f++)
            noise.channels[c].data(f, l) = std::complex<double>(s * g(), s * g());
      break;
    }
    case NoiseKind::kFixedScm: {
      if (spec.fixed_scm.rows() != channels ||
          spec.fixed_scm.cols() != channels)
        throw InvalidInput("fixed_scm size does not match channel count");
      Eigen::MatrixXcd p = 0.5 * (spec.fixed_scm + spec.fixed_scm.adjoint());
      Eigen::LLT<Eigen::MatrixXcd> llt(p);
      if (llt.info() != Eigen::Success)
        throw InvalidInput("fixed_scm is not positive definite");
      Eigen::MatrixXcd chol = llt.matrixL();
      Eigen::VectorXcd w(channels);
      for (int l = 0; l < frames; l++)
        for (int f = 0; f < bins; f++) {
          for (int c = 0; c < channels; c++)
            w(c) = inv_sqrt2 * std::complex<double>(g(), g());
          Eigen::VectorXcd v = chol * w;
          for (int c = 0; c < channels; c++)
            noise.channels[c].data(f, l) = v(c);
        }
      break;
    }
    case NoiseKind::kDiffuseLike: {
      // sinc-shaped coherence across channels, widening with frequency;
      // eigenvalues are clipped so the per-bin Cholesky always exists
      const int half = like.fft_size / 2;
      std::vector<Eigen::MatrixXcd> chol(bins);
      for (int f = 0; f < bins; f++) {
        int bin_index = like.keep_dc ? f : f + 1;
        double fn = static_cast<double>(bin_index) / half;
        Eigen::MatrixXcd gamma(channels, channels);
        for (int i = 0; i < channels; i++)
          for (int j = 0; j < channels; j++)
            gamma(i, j) = sinc(spec.coherence * kPi * fn * std::abs(i - j));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gamma);
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-8);
        Eigen::MatrixXcd fixed =
            es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
        Eigen::LLT<Eigen::MatrixXcd> llt(fixed);
        if (llt.info() != Eigen::Success)
          throw NumericalError("diffuse coherence factorization failed");
        chol[f] = llt.matrixL();
      }
      Eigen::VectorXcd w(channels);
      for (int l = 0; l < frames; l++)
        for (int f = 0; f < bins; f++) {
          for (int c = 0; c < channels; c++)
            w(c) = inv_sqrt2 * std::complex<double>(g(), g());
          Eigen::VectorXcd v = chol[f] * w;
          for (int c = 0; c < channels; c++)
            noise.channels[c].data(f, l) = v(c);
        }
      break;
    }
  }
  return noise;
}

std::string noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::kSpatiallyWhite: return "white";
    case NoiseKind::kFixedScm: return "fixed_scm";
    case NoiseKind::kDiffuseLike: return "diffuse";
  }
  return "unknown";
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Scene make_scene(const SceneSpec& spec) {
  if (spec.channels < 1) throw InvalidInput("scene needs at least 1 channel");
  if (spec.sources < 1) throw InvalidInput("scene needs at least 1 source");
  if (spec.true_taps < 1) throw InvalidInput("true_taps must be >= 1");
  if (!(spec.sample_rate > 0.0))
    throw InvalidInput("sample_rate must be positive");
  if (std::isnan(spec.snr_db) || spec.snr_db == -INFINITY)
    throw InvalidInput("snr_db must be finite or +inf");
  const int n = static_cast<int>(std::lround(spec.duration_s * spec.sample_rate));
  if (n < spec.fft_size)
    throw InvalidInput("scene duration shorter than one analysis frame");

  Scene scene;
  scene.spec = spec;
  scene.num_samples = n;

  for (int k = 0; k < spec.sources; k++) {
    GaussianStream g(substream_seed(spec.seed, "scene/clean", k));
    std::vector<double> w = synth_speech_like(g, n, spec.sample_rate);
    scene.clean.push_back(
        stft(w, spec.fft_size, spec.hop, false, spec.sample_rate));
  }
  const int bins = scene.clean[0].bins();

  MultiSpectrogram reverb;
  reverb.channels.assign(spec.channels, scene.clean[0].zeros_like());
  for (int k = 0; k < spec.sources; k++) {
    GaussianStream g(substream_seed(spec.seed, "scene/atf", k));
    scene.true_filters.push_back(
        random_atf(g, spec.channels, spec.true_taps, bins));
    MultiSpectrogram img = apply_atf(scene.clean[k], scene.true_filters[k]);
    for (int c = 0; c < spec.channels; c++)
      reverb.channels[c].data += img.channels[c].data;
  }

  GaussianStream gnoise(substream_seed(spec.seed, "scene/noise"));
  scene.noise = make_noise(spec.noise, scene.clean[0], spec.channels, gnoise);
  if (std::isinf(spec.snr_db)) {
    scene.noise_scale = 0.0;
    for (int c = 0; c < spec.channels; c++)
      scene.noise.channels[c].data.setZero();
  } else {
    double psig = 0.0, pnz = 0.0;
    for (int c = 0; c < spec.channels; c++) {
      psig += reverb.channels[c].data.squaredNorm();
      pnz += scene.noise.channels[c].data.squaredNorm();
    }
    if (!(pnz > 0.0)) throw NumericalError("noise field came out empty");
    scene.noise_scale = std::sqrt(psig / (pnz * std::pow(10.0, spec.snr_db / 10.0)));
    for (int c = 0; c < spec.channels; c++)
      scene.noise.channels[c].data *= scene.noise_scale;
  }

  scene.mixture.channels.assign(spec.channels, scene.clean[0].zeros_like());
  for (int c = 0; c < spec.channels; c++)
    scene.mixture.channels[c].data =
        reverb.channels[c].data + scene.noise.channels[c].data;

  for (int k = 0; k < spec.sources; k++)
    scene.pseudo.push_back(degrade(scene.clean[k], spec.pseudo_sisdr_db,
                                   substream_seed(spec.seed, "scene/pseudo", k)));
  return scene;
}

Spectrogram degrade(const Spectrogram& clean, double target_sisdr_db,
                    std::uint64_t seed) {
  if (std::isinf(target_sisdr_db) && target_sisdr_db > 0.0) return clean;
  if (!std::isfinite(target_sisdr_db))
    throw InvalidInput("degrade target must be finite or +inf");
  const int n = (clean.frames() - 1) * clean.hop + clean.fft_size;
  std::vector<double> w = istft(clean, n);
  GaussianStream g(seed);
  std::vector<double> p = synth_speech_like(g, n, clean.sample_rate);
  for (int i = 0; i < n; i++) p[i] += 0.3 * g();
  double ww = 0.0, pw = 0.0;
  for (int i = 0; i < n; i++) {
    ww += w[i] * w[i];
    pw += p[i] * w[i];
  }
  if (!(ww > 0.0)) throw InvalidInput("degrade: reference is silent");
  for (int i = 0; i < n; i++) p[i] -= (pw / ww) * w[i];
  double pp = 0.0;
  for (int i = 0; i < n; i++) pp += p[i] * p[i];
  if (!(pp > 0.0)) throw NumericalError("degrade: perturbation vanished");
  // estimate = w + c*p with p orthogonal to w pins SI-SDR at the target
  double c = std::sqrt(ww / (pp * std::pow(10.0, target_sisdr_db / 10.0)));
  std::vector<double> est(n);
  for (int i = 0; i < n; i++) est[i] = w[i] + c * p[i];
  return stft(est, clean.fft_size, clean.hop, clean.keep_dc, clean.sample_rate);
}

void dump_scene(const Scene& scene, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int sr = static_cast<int>(std::lround(scene.spec.sample_rate));

  WavData mix;
  mix.sample_rate = sr;
  mix.samples.resize(scene.mixture.channels.size());
  for (size_t c = 0; c < scene.mixture.channels.size(); c++)
    mix.samples[c] = istft(scene.mixture.channels[c], scene.num_samples);
  write_wav(dir + "/mixture.wav", mix);

  auto write_mono = [&](const Spectrogram& s, const std::string& name) {
    WavData d;
    d.sample_rate = sr;
    d.samples.push_back(istft(s, scene.num_samples));
    write_wav(dir + "/" + name, d);
  };
  for (size_t k = 0; k < scene.clean.size(); k++)
    write_mono(scene.clean[k], "clean_" + std::to_string(k + 1) + ".wav");
  for (size_t k = 0; k < scene.pseudo.size(); k++)
    write_mono(scene.pseudo[k], "pseudo_" + std::to_string(k + 1) + ".wav");

  std::ofstream out(dir + "/manifest.txt");
  if (!out) throw Error("cannot write manifest in " + dir);
  out << "# scene manifest\n";
  out << "seed=" << scene.spec.seed << "\n";
  out << "channels=" << scene.spec.channels << "\n";
  out << "sources=" << scene.spec.sources << "\n";
  out << "sample_rate=" << fmt_double(scene.spec.sample_rate) << "\n";
  out << "fft_size=" << scene.spec.fft_size << "\n";
  out << "hop=" << scene.spec.hop << "\n";
  out << "duration_s=" << fmt_double(scene.spec.duration_s) << "\n";
  out << "snr_db=" << fmt_double(scene.spec.snr_db) << "\n";
  out << "pseudo_sisdr_db=" << fmt_double(scene.spec.pseudo_sisdr_db) << "\n";
  out << "true_taps=" << scene.spec.true_taps << "\n";
  out << "noise_kind=" << noise_kind_name(scene.spec.noise.kind) << "\n";
  out << "noise_scale=" << fmt_double(scene.noise_scale) << "\n";
  out << "num_samples=" << scene.num_samples << "\n";
  out << "mixture=mixture.wav\n";
  for (size_t k = 0; k < scene.clean.size(); k++)
    out << "clean_" << k + 1 << "=clean_" << k + 1 << ".wav\n";
  for (size_t k = 0; k < scene.pseudo.size(); k++)
    out << "pseudo_" << k + 1 << "=pseudo_" << k + 1 << ".wav\n";
  if (!out.good()) throw Error("manifest write failed in " + dir);
}

SceneManifest load_scene_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(dir + "/manifest.txt");
  if (!in) throw InvalidInput("no manifest.txt in " + dir);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("malformed manifest line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw InvalidInput("manifest missing key: " + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  SceneManifest m;
  m.seed = std::stoull(take("seed"));
  m.channels = std::stoi(take("channels"));
  m.sources = std::stoi(take("sources"));
  m.sample_rate = std::stod(take("sample_rate"));
  m.fft_size = std::stoi(take("fft_size"));
  m.hop = std::stoi(take("hop"));
  m.mixture = take("mixture");
  for (int k = 1; kv.count("clean_" + std::to_string(k)); k++)
    m.clean.push_back(take("clean_" + std::to_string(k)));
  for (int k = 1; kv.count("pseudo_" + std::to_string(k)); k++)
    m.pseudo.push_back(take("pseudo_" + std::to_string(k)));
  m.extra = kv;
  auto check = [&](const std::string& rel) {
    if (!fs::exists(fs::path(dir) / rel))
      throw InvalidInput("manifest references missing file: " + rel);
  };
  check(m.mixture);
  for (const auto& p : m.clean) check(p);
  for (const auto& p : m.pseudo) check(p);
  return m;
}

}  // namespace uadps
