// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_WAV_HPP
#define UADPS_WAV_HPP

#include <string>
#include <vector>

namespace uadps {

// Interleaved multichannel audio buffer. samples[c][n] is channel c.
struct WavData {
  double sample_rate = 16000.0;
  std::vector<std::vector<double>> samples;

  int num_channels() const { return static_cast<int>(samples.size()); }
  std::size_t num_frames() const {
    return samples.empty() ? 0 : samples[0].size();
  }
};

// Reads a RIFF/WAVE file. Supported encodings: 32-bit IEEE float
// (format 3) and 16-bit PCM (format 1), both plain and inside a
// WAVE_FORMAT_EXTENSIBLE wrapper. Anything else raises InvalidInput with
// the offending detail; I/O failures raise std::runtime_error mentioning
// the path.
WavData read_wav(const std::string& path);

// Writes 32-bit IEEE float (the default; lossless for test round trips)
// or 16-bit PCM. PCM samples are clipped to [-1, 1) and rounded.
void write_wav(const std::string& path, const WavData& wav,
               bool pcm16 = false);

}  // namespace uadps

#endif  // UADPS_WAV_HPP
