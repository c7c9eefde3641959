#pragma once

#include <cstdint>

namespace mvlatent {

// Deterministic counter-based generator (splitmix64 family).
//
// A stream is identified by a 64-bit base; output k of the stream is
// mix64(base + k * GAMMA), so draws are pure functions of (base, counter)
// and the state serializes as two integers. Substream i of a stream is a
// new stream whose base is an avalanche mix of (base, i); substreams are
// decorrelated by construction and never depend on how many draws the
// parent has made.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : base_(mix64(seed + kGamma)), counter_(0) {}

  Rng substream(std::uint64_t i) const {
    return Rng(FromState{}, mix64(base_ ^ mix64(i + kStreamSalt)), 0);
  }

  std::uint64_t next_u64() { return mix64(base_ + (++counter_) * kGamma); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi). Caller validates lo < hi.
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller; consumes exactly two raw draws.
  double next_normal();

  std::uint64_t state_base() const { return base_; }
  std::uint64_t state_counter() const { return counter_; }
  static Rng from_state(std::uint64_t base, std::uint64_t counter) {
    return Rng(FromState{}, base, counter);
  }

 private:
  struct FromState {};
  Rng(FromState, std::uint64_t base, std::uint64_t counter)
      : base_(base), counter_(counter) {}

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kStreamSalt = 0xD1B54A32D192ED03ull;

  // Stafford "mix13" finalizer: full 64-bit avalanche.
  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t base_;
  std::uint64_t counter_;
};

}  // namespace mvlatent
