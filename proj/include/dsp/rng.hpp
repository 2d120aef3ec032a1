#pragma once

#include <cstdint>
#include <limits>

namespace dsp {

// splitmix64; cheap to construct, so every (frame, voxel) gets its own stream
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

enum class Stream : std::uint64_t { Predict = 1, Birth, Resample, Init, Sim, Noise, Future };

inline SplitMix64 substream(std::uint64_t seed, Stream s, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = mix64(seed ^ 0x5851f42d4c957f2dULL);
  h = mix64(h ^ static_cast<std::uint64_t>(s));
  h = mix64(h ^ a);
  h = mix64(h ^ (b + 0x9e3779b97f4a7c15ULL));
  return SplitMix64(h);
}

// uniform double in [0, 1) from 53 bits
inline double uniform01(SplitMix64& g) { return (g() >> 11) * (1.0 / 9007199254740992.0); }

}  // namespace dsp
