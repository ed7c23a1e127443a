#pragma once

// Counter-based random numbers: Philox 4x32-10 (Salmon, Moraes, Dror, Shaw,
// "Parallel random numbers: as easy as 1, 2, 3", SC'11).
//
// A generator is addressed by (seed, stream); outputs depend only on that
// address and the block counter. Per-(data point, draw index) substreams can
// therefore be evaluated in any order, or concurrently, with identical
// results, which keeps every Monte Carlo estimate in this library a pure
// function of its inputs.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "prl/vec.hpp"

namespace prl {

namespace detail {
inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline std::uint32_t mulhi32(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(a) * b) >> 32);
}
}  // namespace detail

/// Philox4x32-10 block function: 128-bit counter + 64-bit key -> 128 bits.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint32_t lo0 = detail::kPhiloxM0 * ctr[0];
    const std::uint32_t hi0 = detail::mulhi32(detail::kPhiloxM0, ctr[0]);
    const std::uint32_t lo1 = detail::kPhiloxM1 * ctr[2];
    const std::uint32_t hi1 = detail::mulhi32(detail::kPhiloxM1, ctr[2]);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += detail::kPhiloxW0;
    key[1] += detail::kPhiloxW1;
  }
  return ctr;
}

// SplitMix64 finalizer; used only to derive substream ids, never as the
// sample-generating stream itself.
inline std::uint64_t split_mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Stream id of substream k of `base`. Injective in practice (64-bit mix);
/// nested calls give (epoch, batch, point, draw) style addressing.
inline std::uint64_t substream(std::uint64_t base, std::uint64_t k) {
  return split_mix64(base ^ split_mix64(k));
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_{static_cast<std::uint32_t>(stream),
                static_cast<std::uint32_t>(stream >> 32)} {}

  std::uint32_t next_u32() {
    const std::uint64_t block = pos_ >> 2;
    if (!have_block_ || block != cached_block_) {
      buf_ = philox4x32({static_cast<std::uint32_t>(block),
                         static_cast<std::uint32_t>(block >> 32), stream_[0],
                         stream_[1]},
                        key_);
      cached_block_ = block;
      have_block_ = true;
    }
    return buf_[static_cast<std::size_t>(pos_++ & 3)];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal (Box-Muller; second variate cached).
  double normal() {
    if (have_normal_) {
      have_normal_ = false;
      return cached_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    const double a = 2.0 * kPi * u2;
    cached_normal_ = r * std::sin(a);
    have_normal_ = true;
    return r * std::cos(a);
  }

  /// Uniform direction on the unit sphere in R^d.
  Vec unit_vector(int d) {
    if (d < 1) throw std::invalid_argument("unit_vector: d must be >= 1");
    if (d == 1) return {uniform() < 0.5 ? -1.0 : 1.0};
    Vec v(static_cast<std::size_t>(d));
    double n = 0.0;
    do {
      for (auto& vi : v) vi = normal();
      n = norm2(v);
    } while (n == 0.0);
    for (auto& vi : v) vi /= n;
    return v;
  }

  /// Uniform draw from the open ball of given radius about the origin.
  Vec uniform_in_ball(int d, double radius) {
    Vec v = unit_vector(d);
    const double r =
        radius * std::pow(uniform(), 1.0 / static_cast<double>(d));
    for (auto& vi : v) vi *= r;
    return v;
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> stream_;
  std::uint64_t pos_ = 0;
  std::uint64_t cached_block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  bool have_block_ = false;
  bool have_normal_ = false;
  double cached_normal_ = 0.0;
};

/// (seed, stream) address of a generator; `sub(k)` derives child addresses.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  RngStream sub(std::uint64_t k) const { return {seed, substream(stream, k)}; }
  CounterRng rng() const { return CounterRng(seed, stream); }
};

// FNV-1a over the bit patterns of a point's coordinates; used to key
// Monte Carlo mass estimates to their evaluation point deterministically.
inline std::uint64_t hash_point(std::span<const double> x) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (double v : x) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    __builtin_memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFFu;
      h *= 0x100000001B3ull;
    }
  }
  return h;
}

}  // namespace prl
