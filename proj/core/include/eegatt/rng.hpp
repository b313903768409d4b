// Counter-based deterministic random number generation.
//
// Every random draw in the library goes through SplitMix64 so that runs are
// reproducible bit-for-bit across platforms for a fixed seed. Keyed streams
// (dropout masks, per-trial noise) are derived by hashing the key tuple
// instead of consuming sequential state, so the draw for element i never
// depends on evaluation order.

#pragma once

#include <cmath>
#include <cstdint>

namespace eegatt {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Order-sensitive hash for deriving independent stream keys.
inline uint64_t mix_key(uint64_t a, uint64_t b) {
  uint64_t s = a + 0x632BE59BD9B4E019ull;
  s ^= b + 0x9E3779B97F4A7C15ull + (s << 6) + (s >> 2);
  return splitmix64(s);
}

inline uint64_t mix_key(uint64_t a, uint64_t b, uint64_t c) {
  return mix_key(mix_key(a, b), c);
}

inline uint64_t mix_key(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return mix_key(mix_key(a, b, c), d);
}

class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (two draws per call, no cached spare).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  uint64_t state_;
};

// Stateless uniform in [0,1) for (key, index) pairs. Used for dropout masks:
// the mask can be recomputed in the backward pass instead of being stored.
inline double keyed_uniform(uint64_t key, uint64_t index) {
  uint64_t s = mix_key(key, index);
  return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

}  // namespace eegatt
