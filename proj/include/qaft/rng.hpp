#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace qaft {

// SplitMix64 stream whose starting state is a hash of (seed, a, b), so every
// (chain, iteration) or (subject, draw) pair gets its own reproducible stream.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
    state_ = mix(seed ^ 0x6a09e667f3bcc909ULL);
    state_ = mix(state_ ^ (a + 0xbb67ae8584caa73bULL));
    state_ = mix(state_ ^ (b + 0x3c6ef372fe94f82bULL));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    // Box-Muller; the second variate is discarded so draws depend only on the call count.
    const double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace qaft
