// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "uadps/metrics.hpp"
#include "uadps/scene.hpp"
#include "uadps/wav.hpp"

using namespace uadps;

namespace {

// reverberant part of a scene, accumulated exactly the way make_scene does
MultiSpectrogram reverb_sum(const Scene& sc) {
  MultiSpectrogram reverb;
  reverb.channels.assign(sc.spec.channels, sc.clean[0].zeros_like());
  for (size_t k = 0; k < sc.clean.size(); k++) {
    MultiSpectrogram img = apply_atf(sc.clean[k], sc.true_filters[k]);
    for (int c = 0; c < sc.spec.channels; c++)
      reverb.channels[c].data += img.channels[c].data;
  }
  return reverb;
}

std::vector<double> tone_plus_noise(int n, double sr, std::uint64_t seed) {
  GaussianStream g(seed);
  std::vector<double> w(n);
  for (int i = 0; i < n; i++)
    w[i] = 0.3 * std::sin(2.0 * M_PI * 220.0 * i / sr) +
           0.1 * std::sin(2.0 * M_PI * 913.0 * i / sr + 0.7) + 0.05 * g();
  return w;
}

double my_si_sdr(const std::vector<double>& e, const std::vector<double>& r) {
  double dot = 0.0, rr = 0.0;
  for (size_t i = 0; i < r.size(); i++) {
    dot += e[i] * r[i];
    rr += r[i] * r[i];
  }
  double s = dot / rr, se = 0.0, ee = 0.0;
  for (size_t i = 0; i < r.size(); i++) {
    se += s * r[i] * s * r[i];
    double d = e[i] - s * r[i];
    ee += d * d;
  }
  return 10.0 * std::log10(se / ee);
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("make_scene is bit-deterministic per seed") {
  SceneSpec spec;
  spec.channels = 2;
  spec.sources = 2;
  spec.duration_s = 0.25;
  spec.fft_size = 128;
  spec.hop = 32;
  spec.seed = 10;
  Scene a = make_scene(spec);
  Scene b = make_scene(spec);
  CHECK(a.noise_scale == b.noise_scale);
  CHECK(a.num_samples == b.num_samples);
  for (int c = 0; c < 2; c++)
    CHECK(tu::bit_equal(a.mixture.channels[c].data,
                        b.mixture.channels[c].data));
  for (int k = 0; k < 2; k++) {
    CHECK(tu::bit_equal(a.clean[k].data, b.clean[k].data));
    CHECK(tu::bit_equal(a.pseudo[k].data, b.pseudo[k].data));
    for (int c = 0; c < 2; c++)
      CHECK(tu::bit_equal(a.true_filters[k].taps[c],
                          b.true_filters[k].taps[c]));
  }
  spec.seed = 11;
  Scene c = make_scene(spec);
  CHECK_FALSE(
      tu::bit_equal(a.mixture.channels[0].data, c.mixture.channels[0].data));
}

TEST_CASE("infinite snr disables the noise term entirely") {
  SceneSpec spec;
  spec.channels = 3;
  spec.duration_s = 0.2;
  spec.fft_size = 128;
  spec.hop = 32;
  spec.snr_db = INFINITY;
  spec.seed = 20;
  Scene sc = make_scene(spec);
  CHECK(sc.noise_scale == 0.0);
  MultiSpectrogram reverb = reverb_sum(sc);
  for (int c = 0; c < 3; c++) {
    CHECK(sc.noise.channels[c].data.norm() == 0.0);
    CHECK((sc.mixture.channels[c].data - reverb.channels[c].data)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("mixture reconstructs from parts to rounding") {
  SceneSpec spec;
  spec.channels = 3;
  spec.sources = 2;
  spec.duration_s = 0.4;
  spec.fft_size = 256;
  spec.hop = 64;
  spec.snr_db = 5.0;
  spec.noise.kind = NoiseKind::kDiffuseLike;
  spec.seed = 30;
  Scene sc = make_scene(spec);
  MultiSpectrogram reverb = reverb_sum(sc);
  double err = 0.0, ref = 0.0;
  for (int c = 0; c < 3; c++) {
    err += (sc.mixture.channels[c].data - reverb.channels[c].data -
            sc.noise.channels[c].data)
               .squaredNorm();
    ref += sc.mixture.channels[c].data.squaredNorm();
  }
  CHECK(std::sqrt(err) <= 1e-10 * std::sqrt(ref));
}

TEST_CASE("spatially white noise hits its per-bin variance") {
  SceneSpec spec;
  spec.channels = 4;
  spec.duration_s = 0.83;  // about 100 frames at 512/128
  spec.snr_db = 0.0;
  spec.noise.variance = 1.0;
  spec.seed = 40;
  Scene sc = make_scene(spec);
  double sum = 0.0;
  long count = 0;
  for (int c = 0; c < 4; c++) {
    sum += sc.noise.channels[c].data.squaredNorm();
    count += sc.noise.channels[c].data.size();
  }
  REQUIRE(count >= 100000);
  const double measured = sum / count;
  const double target = sc.noise_scale * sc.noise_scale * spec.noise.variance;
  CHECK(measured > 0.95 * target);
  CHECK(measured < 1.05 * target);
}

TEST_CASE("fixed scm noise reproduces its covariance") {
  SceneSpec spec;
  spec.channels = 3;
  spec.duration_s = 4.01;
  spec.fft_size = 128;
  spec.hop = 32;
  spec.snr_db = -3.0;
  spec.noise.kind = NoiseKind::kFixedScm;
  spec.noise.fixed_scm = tu::random_pd(3, 77);
  spec.seed = 50;
  Scene sc = make_scene(spec);
  const int F = sc.noise.channels[0].bins();
  const int L = sc.noise.channels[0].frames();
  Eigen::MatrixXcd emp = Eigen::MatrixXcd::Zero(3, 3);
  Eigen::VectorXcd v(3);
  for (int l = 0; l < L; l++)
    for (int f = 0; f < F; f++) {
      for (int c = 0; c < 3; c++) v(c) = sc.noise.channels[c].data(f, l);
      emp += v * v.adjoint();
    }
  emp /= static_cast<double>(F) * L;
  Eigen::MatrixXcd want =
      sc.noise_scale * sc.noise_scale * spec.noise.fixed_scm;
  CHECK((emp - want).norm() < 0.10 * want.norm());
}

TEST_CASE("diffuse noise decorrelates with frequency") {
  SceneSpec spec;
  spec.channels = 2;
  spec.duration_s = 3.0;
  spec.fft_size = 128;
  spec.hop = 32;
  spec.snr_db = 0.0;
  spec.noise.kind = NoiseKind::kDiffuseLike;
  spec.noise.coherence = 4.0;
  spec.seed = 60;
  Scene sc = make_scene(spec);
  const int F = sc.noise.channels[0].bins();
  const int L = sc.noise.channels[0].frames();
  auto coherence_at = [&](int f) {
    cplx cross(0.0, 0.0);
    double p0 = 0.0, p1 = 0.0;
    for (int l = 0; l < L; l++) {
      cplx a = sc.noise.channels[0].data(f, l);
      cplx b = sc.noise.channels[1].data(f, l);
      cross += a * std::conj(b);
      p0 += std::norm(a);
      p1 += std::norm(b);
    }
    return std::abs(cross) / std::sqrt(p0 * p1);
  };
  CHECK(coherence_at(0) > 0.9);       // lowest kept bin: nearly coherent
  CHECK(coherence_at(F - 1) < 0.3);   // near nyquist: nearly independent
}

TEST_CASE("degrade pins the target si-sdr") {
  const int n = 12000;
  const double sr = 16000.0;
  std::vector<double> w = tone_plus_noise(n, sr, 70);
  Spectrogram clean = stft(w, 256, 64, false, sr);

  Spectrogram same = degrade(clean, INFINITY, 1);
  CHECK(tu::bit_equal(same.data, clean.data));

  std::vector<double> ref = istft(clean, n);
  double prev = -1e9;
  for (double target : {0.0, 5.0, 10.0}) {
    Spectrogram deg = degrade(clean, target, 71);
    CHECK(deg.same_shape(clean));
    double got = si_sdr(istft(deg, n), ref);
    CHECK(std::abs(got - target) < 0.5);
    CHECK(got > prev);
    prev = got;
  }
  CHECK_THROWS_AS(degrade(clean, std::nan(""), 1), InvalidInput);
  CHECK_THROWS_AS(degrade(clean, -INFINITY, 1), InvalidInput);
  Spectrogram silent = clean.zeros_like();
  CHECK_THROWS_AS(degrade(silent, 5.0, 1), InvalidInput);
}

TEST_CASE("si_sdr definition, caps and invariances") {
  std::vector<double> ref = tone_plus_noise(1000, 16000.0, 80);
  CHECK(si_sdr(ref, ref) == 100.0);
  std::vector<double> twice = ref;
  for (double& v : twice) v *= 2.0;
  CHECK(si_sdr(twice, ref) == 100.0);

  // orthogonal perturbation with reference energy: exactly 0 dB
  GaussianStream g(81);
  std::vector<double> v(ref.size());
  for (double& x : v) x = g();
  double dot = std::inner_product(v.begin(), v.end(), ref.begin(), 0.0);
  double rr = std::inner_product(ref.begin(), ref.end(), ref.begin(), 0.0);
  for (size_t i = 0; i < v.size(); i++) v[i] -= (dot / rr) * ref[i];
  double vv = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
  std::vector<double> est = ref;
  for (size_t i = 0; i < est.size(); i++)
    est[i] += v[i] * std::sqrt(rr / vv);
  CHECK(si_sdr(est, ref) == doctest::Approx(0.0).epsilon(1e-9));

  // scale invariance of the estimate
  std::vector<double> scaled = est;
  for (double& x : scaled) x *= 3.7;
  CHECK(std::abs(si_sdr(scaled, ref) - si_sdr(est, ref)) < 1e-9);

  // orthogonal estimate bottoms out at the cap
  std::vector<double> ortho = v;
  CHECK(si_sdr(ortho, ref) == -100.0);

  std::vector<double> zeros(ref.size(), 0.0);
  CHECK_THROWS_AS(si_sdr(ref, zeros), InvalidInput);
  CHECK_THROWS_AS(si_sdr(std::vector<double>{1.0}, ref), InvalidInput);
  CHECK_THROWS_AS(si_sdr({}, {}), InvalidInput);
}

TEST_CASE("permute_match finds the best assignment") {
  std::vector<double> r0 = tone_plus_noise(400, 16000.0, 90);
  std::vector<double> r1 = tone_plus_noise(400, 16000.0, 91);
  std::vector<double> r2 = tone_plus_noise(400, 16000.0, 92);

  CHECK(permute_match({r0}, {r0}) == std::vector<int>{0});
  // swapped pair: estimate 1 belongs to reference 0 and vice versa
  CHECK(permute_match({r1, r0}, {r0, r1}) == std::vector<int>{1, 0});

  // K = 3 with noisy shuffled estimates vs an independent exhaustive scorer
  GaussianStream g(93);
  auto noisy = [&](const std::vector<double>& r, double amt) {
    std::vector<double> out = r;
    for (double& v : out) v += amt * g();
    return out;
  };
  std::vector<std::vector<double>> refs{r0, r1, r2};
  std::vector<std::vector<double>> ests{noisy(r2, 0.02), noisy(r0, 0.05),
                                        noisy(r1, 0.01)};
  std::vector<int> got = permute_match(ests, refs);

  std::vector<int> idx{0, 1, 2};
  std::vector<int> best;
  double best_sum = -1e300;
  do {
    double sum = 0.0;
    for (int r = 0; r < 3; r++) sum += my_si_sdr(ests[idx[r]], refs[r]);
    if (sum > best_sum) {
      best_sum = sum;
      best = idx;
    }
  } while (std::next_permutation(idx.begin(), idx.end()));
  CHECK(got == best);
  CHECK(got == std::vector<int>{1, 2, 0});

  CHECK_THROWS_AS(permute_match({}, {}), InvalidInput);
  CHECK_THROWS_AS(permute_match({r0}, {r0, r1}), InvalidInput);
  std::vector<std::vector<double>> five(5, r0);
  CHECK_THROWS_AS(permute_match(five, five), InvalidInput);
}

TEST_CASE("scene directories round-trip through dump and load") {
  namespace fs = std::filesystem;
  SceneSpec spec;
  spec.channels = 2;
  spec.sources = 2;
  spec.duration_s = 0.2;
  spec.fft_size = 128;
  spec.hop = 32;
  spec.snr_db = 3.0;
  spec.seed = 123;
  Scene sc = make_scene(spec);

  fs::path dir = fs::temp_directory_path() / "uadps_test_scene_dump";
  fs::remove_all(dir);
  dump_scene(sc, dir.string());

  SceneManifest m = load_scene_dir(dir.string());
  CHECK(m.seed == 123);
  CHECK(m.channels == 2);
  CHECK(m.sources == 2);
  CHECK(m.sample_rate == 16000.0);
  CHECK(m.fft_size == 128);
  CHECK(m.hop == 32);
  CHECK(m.mixture == "mixture.wav");
  REQUIRE(m.clean.size() == 2);
  REQUIRE(m.pseudo.size() == 2);
  CHECK(m.extra.count("snr_db") == 1);
  CHECK(m.extra.at("noise_kind") == "white");
  CHECK(m.extra.at("num_samples") == std::to_string(sc.num_samples));

  WavData mix = read_wav((dir / m.mixture).string());
  REQUIRE(mix.samples.size() == 2);
  CHECK(static_cast<int>(mix.samples[0].size()) == sc.num_samples);
  WavData c0 = read_wav((dir / m.clean[0]).string());
  REQUIRE(c0.samples.size() == 1);
  std::vector<double> want = istft(sc.clean[0], sc.num_samples);
  double worst = 0.0;
  for (int i = 0; i < sc.num_samples; i++)
    worst = std::max(worst, std::abs(c0.samples[0][i] - want[i]));
  CHECK(worst < 1e-5);

  // deleting a referenced file breaks the load
  fs::remove(dir / m.clean[0]);
  CHECK_THROWS_AS(load_scene_dir(dir.string()), InvalidInput);
  CHECK_THROWS_AS(load_scene_dir((dir / "nope").string()), InvalidInput);
  fs::remove_all(dir);
}

TEST_CASE("make_scene rejects bad specs") {
  SceneSpec good;
  good.duration_s = 0.1;
  good.fft_size = 128;
  good.hop = 32;
  good.channels = 2;

  SceneSpec s = good;
  s.channels = 0;
  CHECK_THROWS_AS(make_scene(s), InvalidInput);
  s = good;
  s.sources = 0;
  CHECK_THROWS_AS(make_scene(s), InvalidInput);
  s = good;
  s.true_taps = 0;
  CHECK_THROWS_AS(make_scene(s), InvalidInput);
  s = good;
  s.snr_db = std::nan("");
  CHECK_THROWS_AS(make_scene(s), InvalidInput);
  s = good;
  s.snr_db = -INFINITY;
  CHECK_THROWS_AS(make_scene(s), InvalidInput);
  s = good;
  s.duration_s = 0.001;  // shorter than one frame
  CHECK_THROWS_AS(make_scene(s), InvalidInput);
  s = good;
  s.noise.variance = 0.0;
  CHECK_THROWS_AS(make_scene(s), InvalidInput);
  s = good;
  s.noise.kind = NoiseKind::kFixedScm;
  s.noise.fixed_scm = Eigen::MatrixXcd::Identity(3, 3);  // wrong size
  CHECK_THROWS_AS(make_scene(s), InvalidInput);
  s.noise.fixed_scm = -Eigen::MatrixXcd::Identity(2, 2);  // not PD
  CHECK_THROWS_AS(make_scene(s), InvalidInput);
}

}  // TEST_SUITE
