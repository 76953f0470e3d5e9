// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "uadps/errors.hpp"

namespace uadps {

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] |
                                    (static_cast<std::uint16_t>(p[1]) << 8));
}

void wr_u32(std::vector<unsigned char>* out, std::uint32_t v) {
  out->push_back(static_cast<unsigned char>(v & 0xff));
  out->push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out->push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out->push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}
void wr_u16(std::vector<unsigned char>* out, std::uint16_t v) {
  out->push_back(static_cast<unsigned char>(v & 0xff));
  out->push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open WAV file: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw InvalidInput("not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t chunk_len = rd_u32(buf.data() + pos + 4);
    const unsigned char* body = buf.data() + pos + 8;
    if (pos + 8 + chunk_len > buf.size())
      throw InvalidInput("truncated WAV chunk in " + path);
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw InvalidInput("short fmt chunk in " + path);
      format = rd_u16(body);
      channels = rd_u16(body + 2);
      rate = rd_u32(body + 4);
      bits = rd_u16(body + 14);
      if (format == 0xfffe) {  // WAVE_FORMAT_EXTENSIBLE: real tag at +24
        if (chunk_len < 40)
          throw InvalidInput("short extensible fmt chunk in " + path);
        format = rd_u16(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_off == 0)
    throw InvalidInput("WAV missing fmt or data chunk: " + path);
  if (channels < 1) throw InvalidInput("WAV with zero channels: " + path);
  const bool is_float = format == 3 && bits == 32;
  const bool is_pcm16 = format == 1 && bits == 16;
  if (!is_float && !is_pcm16)
    throw InvalidInput("unsupported WAV encoding (format " +
                       std::to_string(format) + ", " + std::to_string(bits) +
                       " bits) in " + path +
                       "; expected 32-bit float or 16-bit PCM");

  const std::size_t bytes_per = is_float ? 4 : 2;
  const std::size_t frames = data_len / (bytes_per * channels);
  WavData wav;
  wav.sample_rate = rate;
  wav.samples.assign(channels, std::vector<double>(frames, 0.0));
  const unsigned char* d = buf.data() + data_off;
  for (std::size_t n = 0; n < frames; ++n)
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* s = d + (n * channels + c) * bytes_per;
      if (is_float) {
        float v;
        std::uint32_t raw = rd_u32(s);
        std::memcpy(&v, &raw, 4);
        wav.samples[c][n] = static_cast<double>(v);
      } else {
        const std::int16_t v = static_cast<std::int16_t>(rd_u16(s));
        wav.samples[c][n] = static_cast<double>(v) / 32768.0;
      }
    }
  return wav;
}

void write_wav(const std::string& path, const WavData& wav, bool pcm16) {
  const int C = wav.num_channels();
  if (C < 1) throw InvalidInput("write_wav: no channels");
  const std::size_t frames = wav.num_frames();
  for (const auto& ch : wav.samples)
    if (ch.size() != frames)
      throw InvalidInput("write_wav: ragged channel lengths");

  const std::uint16_t bytes_per = pcm16 ? 2 : 4;
  const std::uint32_t data_len =
      static_cast<std::uint32_t>(frames * static_cast<std::size_t>(C) * bytes_per);

  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  wr_u32(&out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  wr_u32(&out, 16);
  wr_u16(&out, pcm16 ? 1 : 3);
  wr_u16(&out, static_cast<std::uint16_t>(C));
  const std::uint32_t rate = static_cast<std::uint32_t>(wav.sample_rate);
  wr_u32(&out, rate);
  wr_u32(&out, rate * C * bytes_per);
  wr_u16(&out, static_cast<std::uint16_t>(C * bytes_per));
  wr_u16(&out, pcm16 ? 16 : 32);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  wr_u32(&out, data_len);

  for (std::size_t n = 0; n < frames; ++n)
    for (int c = 0; c < C; ++c) {
      const double v = wav.samples[static_cast<std::size_t>(c)][n];
      if (pcm16) {
        const double scaled = std::clamp(v, -1.0, 32767.0 / 32768.0) * 32768.0;
        const std::int16_t q =
            static_cast<std::int16_t>(std::lround(std::clamp(
                scaled, -32768.0, 32767.0)));
        wr_u16(&out, static_cast<std::uint16_t>(q));
      } else {
        const float f = static_cast<float>(v);
        std::uint32_t raw;
        std::memcpy(&raw, &f, 4);
        wr_u32(&out, raw);
      }
    }

  std::ofstream of(path, std::ios::binary | std::ios::trunc);
  if (!of) throw std::runtime_error("cannot create WAV file: " + path);
  of.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
  if (!of) throw std::runtime_error("failed writing WAV file: " + path);
}

}  // namespace uadps
