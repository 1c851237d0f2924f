#pragma once

// Named, splittable deterministic random streams.
//
// Stream key  = splitmix64(seed ^ fnv1a64(name))
// Generator   = xoshiro256**, state filled by four splitmix64 draws from the key
// uniform()   = ((next() >> 11) + 1) * 2^-53, in (0, 1]
// normal()    = Box-Muller cosine branch, two uniforms per draw
//
// Each sensor channel owns its own stream, so adding a channel never
// perturbs the draws of any other.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace strutservo {

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

[[nodiscard]] constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

class RngStream {
 public:
  RngStream() : RngStream(0, "") {}

  RngStream(std::uint64_t seed, std::string_view name) {
    std::uint64_t key = seed ^ fnv1a64(name);
    key = splitmix64(key);
    for (auto& word : s_) word = splitmix64(key);
  }

  std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    ++draws_;
    return result;
  }

  double uniform() noexcept { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Number of 64-bit words drawn so far; only ever increases.
  [[nodiscard]] std::uint64_t cursor() const noexcept { return draws_; }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> s_{};
  std::uint64_t draws_ = 0;
};

}  // namespace strutservo
