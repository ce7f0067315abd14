#pragma once

#include <cmath>
#include <cstdint>

namespace rhc {

// Seeding and substream derivation are part of the reproducibility contract:
// every table in the experiment harness is a pure function of a single master
// seed through the mappings below. Changing any of them remaps all outputs.
//
//   generator        xoshiro256++ (Blackman & Vigna), state expanded from the
//                    64-bit seed by four SplitMix64 steps
//   uniform01        (next() >> 11) * 2^-53, in [0, 1)
//   normal           Marsaglia polar method; pairs generated together, the
//                    spare is returned by the following call
//   substream(s, i)  SplitMix64 chain mixing seed and stream id (see below);
//                    used for per-step merge sampling (id = step), per-
//                    replication streams (id = replication index), and
//                    per-reference draws in the gap statistic

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// substream_seed(seed, id) = sm(sm(seed) ^ sm(id ^ C)) where sm is one
// SplitMix64 step from the given value and C decorrelates small ids.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t id) {
  std::uint64_t s = seed;
  const std::uint64_t a = splitmix64_next(s);
  s = id ^ 0xD1B54A32D192ED03ull;
  const std::uint64_t b = splitmix64_next(s);
  s = a ^ b;
  return splitmix64_next(s);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via the polar method. Consumes uniforms in pairs; the
  // second variate of each accepted pair is cached and returned next.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    have_spare_ = true;
    return u * factor;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rhc
