#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace purebirth {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of replicate `index` under `master_seed`. Depends on nothing else, so
/// a replicate draws the same numbers whichever thread runs it.
inline constexpr std::uint64_t replicate_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master_seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

class ReplicateStream {
 public:
  ReplicateStream(std::uint64_t master_seed, std::uint64_t index) : engine_(replicate_seed(master_seed, index)) {}

  /// Uniform on the open interval (0, 1): the top 52 bits, offset by half a
  /// grid step. Both (m + 0.5) and the product are exact, so 0 and 1 never occur.
  double open_uniform() noexcept {
    const std::uint64_t bits = engine_() >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
  }

  /// Exponential(rate) by inversion, -ln(U)/rate.
  double exponential(double rate) noexcept { return -std::log(open_uniform()) / rate; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace purebirth
