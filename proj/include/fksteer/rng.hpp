#pragma once

// Counter-keyed random streams. A stream is fully determined by
// (seed, purpose, a, b), so every particle at every step draws from its own
// generator and results do not depend on evaluation order or thread count.

#include <cstdint>
#include <limits>
#include <random>

namespace fksteer {

enum class StreamPurpose : std::uint64_t {
  Init = 1,
  Move = 2,
  Resample = 3,
  Hutchinson = 4,
  Reference = 5,
  Features = 6,
  Projections = 7,
  Langevin = 8,
  Problem = 9,
  Basis = 10,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// xoshiro256** seeded from a hashed key.
class StreamRng {
 public:
  using result_type = std::uint64_t;

  StreamRng(std::uint64_t seed, StreamPurpose purpose, std::uint64_t a = 0,
            std::uint64_t b = 0) {
    std::uint64_t key = seed;
    std::uint64_t h = splitmix64(key);
    key = h ^ (static_cast<std::uint64_t>(purpose) * 0xD1B54A32D192ED03ULL);
    h = splitmix64(key);
    key = h ^ (a * 0x8CB92BA72F3D8DD7ULL);
    h = splitmix64(key);
    key = h ^ (b * 0xABC98388FB8FAC03ULL);
    for (auto& s : s_) s = splitmix64(key);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  // +1 or -1 with equal probability.
  double rademacher() { return ((*this)() >> 63) ? 1.0 : -1.0; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace fksteer
