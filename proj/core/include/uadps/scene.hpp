// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_SCENE_HPP
#define UADPS_SCENE_HPP

#include <map>
#include <string>
#include <vector>

#include "uadps/fcp.hpp"
#include "uadps/spectral.hpp"

namespace uadps {

enum class NoiseKind { kSpatiallyWhite, kFixedScm, kDiffuseLike };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kSpatiallyWhite;
  // kSpatiallyWhite: per-bin E|n|^2 before SNR scaling.
  double variance = 1.0;
  // kFixedScm: target C x C Hermitian PD covariance (before SNR scaling).
  Eigen::MatrixXcd fixed_scm;
  // kDiffuseLike: rate of the sinc-shaped inter-channel coherence decay.
  double coherence = 4.0;
};

struct SceneSpec {
  int channels = 4;
  int sources = 1;
  int true_taps = 6;  // length of the ATFs the scene is built with
  double duration_s = 1.0;
  double sample_rate = 16000.0;
  int fft_size = 512;
  int hop = 128;
  double snr_db = 0.0;           // +infinity disables noise entirely
  double pseudo_sisdr_db = 5.0;  // SI-SDR of the fabricated inputs vs clean
  NoiseSpec noise;
  std::uint64_t seed = 0;
};

// A synthetic multichannel recording with known ground truth. All STFTs
// share the spec's format (DC dropped); the identity
//   mixture == sum_k apply_atf(clean[k], true_filters[k]) + noise
// holds exactly because that is how the mixture is assembled.
struct Scene {
  SceneSpec spec;
  MultiSpectrogram mixture;
  std::vector<Spectrogram> clean;   // dry reference-channel sources
  std::vector<Spectrogram> pseudo;  // fabricated discriminative estimates
  std::vector<AtfFilter> true_filters;
  MultiSpectrogram noise;   // post-scaling, as added to the mixture
  double noise_scale = 0.0;  // amplitude factor applied to hit snr_db
  int num_samples = 0;       // time-domain length behind the STFTs
};

// Builds a scene from speech-like harmonic sources, random exponentially
// decaying STFT-domain ATFs (channel 0 keeps a unit first tap), and noise
// of the requested kind scaled to snr_db. Fully determined by spec.seed.
Scene make_scene(const SceneSpec& spec);

// Fabricates a discriminative-style estimate at an exact target SI-SDR:
// clean plus a scaled speech-and-noise perturbation orthogonalized
// against the clean waveform. +infinity returns the input unchanged.
Spectrogram degrade(const Spectrogram& clean, double target_sisdr_db,
                    std::uint64_t seed);

// --- scene directories -----------------------------------------------

// Writes mixture.wav (multichannel), clean_<k>.wav, pseudo_<k>.wav and a
// plain-text manifest into dir (created if needed).
void dump_scene(const Scene& scene, const std::string& dir);

struct SceneManifest {
  std::uint64_t seed = 0;
  int channels = 0;
  int sources = 0;
  double sample_rate = 0.0;
  int fft_size = 0;
  int hop = 0;
  std::string mixture;              // paths relative to the directory
  std::vector<std::string> clean;
  std::vector<std::string> pseudo;
  std::map<std::string, std::string> extra;  // remaining key=value pairs
};

// Parses dir/manifest.txt and verifies the referenced WAV files exist.
SceneManifest load_scene_dir(const std::string& dir);

}  // namespace uadps

#endif  // UADPS_SCENE_HPP
