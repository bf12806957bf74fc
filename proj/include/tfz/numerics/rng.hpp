#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace tfz {

std::uint64_t splitmix64(std::uint64_t& state);

/// Order-sensitive hash of a list of words; used to derive per-sample and
/// per-cell seeds from a base seed.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words);

/// xoshiro256** seeded through splitmix64. Every draw is defined in terms of
/// integer arithmetic plus IEEE division, so sequences are platform-stable.
/// Normal draws use Box-Muller and depend on libm log/cos/sqrt.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n); n >= 1.
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tfz
