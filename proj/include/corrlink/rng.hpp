#pragma once

// xoshiro256** seeded through splitmix64. Every trial gets its own generator
// derived from (master seed, trial index), so results do not depend on how
// trials are scheduled across threads.

#include <cmath>
#include <cstdint>

#include "corrlink/statmath.hpp"

namespace corrlink {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of the independent substream number `index` under `master`.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master ^ 0x6A09E667F3BCC909ULL;
  std::uint64_t h = splitmix64(s);
  s = h ^ (index * 0xD1B54A32D192ED03ULL + 0x243F6A8885A308D3ULL);
  splitmix64(s);
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal by inversion.
  double normal() { return statmath::Q_inv(uniform()); }

  /// Exponential with unit rate.
  double exponential() { return -std::log(uniform()); }

  bool coin() { return (next() >> 63) != 0; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

}  // namespace corrlink
