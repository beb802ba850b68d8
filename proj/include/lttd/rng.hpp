// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace lttd {

// Counter-based pseudo-random stream. Every draw is a pure function of
// (seed, stream name, two integer subkeys, counter), so values are
// reproducible across platforms, runs and thread schedules.

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view stream,
             std::uint64_t sub_a = 0, std::uint64_t sub_b = 0)
      : key_(mix64(mix64(seed + 0x9e3779b97f4a7c15ull) ^ fnv1a64(stream) ^
                   mix64(sub_a * 0xd6e8feb86659fd93ull + 1) ^
                   mix64(sub_b * 0xa0761d6478bd642full + 2))) {}

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ull;
    return mix64(key_ ^ counter_);
  }

  /// Uniform double in [0, 1), 53 bits of entropy.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Two uniforms per draw.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Uniform index in [0, n) by 128-bit multiply-shift.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lttd
