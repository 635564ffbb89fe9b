#pragma once

// Counter-based random streams. A stream is identified by a 64-bit key; draw
// k of the stream is a pure function of (key, k), so results never depend on
// how work is split across threads. The mixer is the SplitMix64 finalizer.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace rdd {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a child key from a parent key and a list of integer labels, e.g.
/// (seed, delta index, omega index) for one sweep cell.
inline constexpr std::uint64_t derive_key(std::uint64_t parent, std::initializer_list<std::uint64_t> labels) {
  std::uint64_t k = mix64(parent ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t l : labels) k = mix64(k ^ mix64(l + 0x3c6ef372fe94f82bULL));
  return k;
}

class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  constexpr result_type operator()() { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open_low() { return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() {
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection.
    for (;;) {
      const std::uint64_t x = (*this)();
      const unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= bound || low >= (-bound) % bound) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  [[nodiscard]] constexpr std::uint64_t key() const { return key_; }
  [[nodiscard]] constexpr std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace rdd
