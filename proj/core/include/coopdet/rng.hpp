#pragma once

#include <cmath>
#include <cstdint>

namespace coopdet {

// Finalizer of the splitmix64 generator. Also used on its own as a cheap
// mixing/hash function for content hashes and stream forking.
constexpr uint64_t splitmix64_mix(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic pseudorandom stream. Everything in this codebase that needs
// randomness draws from one of these so results are reproducible across
// platforms and standard-library versions (std::uniform_real_distribution and
// friends are not portable).
//
// Substream convention: fork(tag) yields an independent stream keyed by
// (state, tag). Per-frame streams are fork(frame_id), per-cell streams are
// fork(cell_index), etc. Forking never advances the parent.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  SplitMix64 fork(uint64_t tag) const {
    return SplitMix64(splitmix64_mix(state_ ^ splitmix64_mix(tag)));
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). n must be > 0. Rejection-free modulo is fine
  // here: n is always tiny compared to 2^64 so the bias is unobservable.
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (the polar form would consume a
  // data-dependent number of draws, which breaks stream accounting).
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    constexpr double two_pi = 6.28318530717958647692;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace coopdet
