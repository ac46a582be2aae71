#pragma once

// SplitMix64 streams and the normative value generators used for weights,
// activations and permutations. Every derived quantity is a fixed function
// of the raw 64-bit stream so that independent implementations can
// reproduce files and reports byte for byte.

#include <cmath>
#include <cstdint>
#include <vector>

#include "qgemm/half.hpp"

namespace qgemm {

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Stable sub-stream seed for (base seed, salt) pairs.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  return SplitMix64(base + salt * 0x9E3779B97F4A7C15ull).next();
}

// Activation value in [-1, 1): top 24 bits u, value = u/2^23 - 1, rounded
// to binary16. Both intermediate steps are exact in binary32.
inline Half next_activation(SplitMix64& g) {
  const auto u = static_cast<std::uint32_t>(g.next() >> 40);
  return f32_to_f16(static_cast<float>(u) * 0x1p-23f - 1.0f);
}

// 4-bit code or zero point: top 4 bits of the draw.
inline std::uint8_t next_code(SplitMix64& g) {
  return static_cast<std::uint8_t>(g.next() >> 60);
}

// Positive group scale 2^(-6 + 3*(u/2^24)) with u the top 24 bits,
// spanning [2^-6, 2^-3).
inline Half next_scale(SplitMix64& g) {
  const auto u = static_cast<std::uint32_t>(g.next() >> 40);
  const double exponent = -6.0 + 3.0 * (static_cast<double>(u) * 0x1p-24);
  return f32_to_f16(static_cast<float>(std::exp2(exponent)));
}

// Fisher-Yates shuffle of 0..k-1 with successive draws: for i = k-1 down
// to 1, j = next() % (i + 1), swap(v[i], v[j]).
inline std::vector<std::uint32_t> random_permutation(SplitMix64& g,
                                                     std::uint32_t k) {
  std::vector<std::uint32_t> v(k);
  for (std::uint32_t i = 0; i < k; ++i) v[i] = i;
  for (std::uint32_t i = k; i-- > 1;) {
    const auto j = static_cast<std::uint32_t>(g.next() % (i + 1));
    std::swap(v[i], v[j]);
  }
  return v;
}

}  // namespace qgemm
