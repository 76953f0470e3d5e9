// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_RNG_HPP
#define UADPS_RNG_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <string_view>

namespace uadps {

// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

inline std::uint64_t hash_bytes(const void* data, std::size_t n,
                                std::uint64_t seed = 0) {
  // FNV-1a over bytes, finished with mix64. Not cryptographic; used only
  // to derive reproducible RNG substreams from tensor contents.
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed ^ 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

inline std::uint64_t hash_str(std::string_view s, std::uint64_t seed = 0) {
  return hash_bytes(s.data(), s.size(), seed);
}

// Derives the seed of an independent substream from a master seed and a
// list of tags (purpose string, source key, step index, ...). Draw order
// inside a substream is fixed by the caller, so results do not depend on
// scheduling or on how many other substreams exist.
inline std::uint64_t substream_seed(std::uint64_t master,
                                    std::string_view purpose,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = mix64(master);
  h = hash_combine(h, hash_str(purpose));
  h = hash_combine(h, mix64(a));
  h = hash_combine(h, mix64(b));
  return h;
}

// Deterministic N(0,1) stream. Box-Muller is implemented here instead of
// std::normal_distribution because the latter's algorithm is
// implementation-defined; this one produces identical bits on every
// platform given the same seed.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : eng_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1], u2 in [0,1): avoids log(0).
    double u1 = 1.0 - uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;  // 2*pi
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace uadps

#endif  // UADPS_RNG_HPP
