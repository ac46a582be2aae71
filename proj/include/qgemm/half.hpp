#pragma once

// Software IEEE 754 binary16 ("half") scalar and two-lane packed arithmetic.
//
// Bit layout, MSB to LSB:  s eeeee mmmmmmmmmm
//   sign      1 bit
//   exponent  5 bits, bias 15 (00000 = zero/subnormal, 11111 = inf/NaN)
//   fraction 10 bits
//
// Semantics:
//   * Rounding is round-to-nearest-even everywhere; no other modes.
//   * Subnormals are fully supported and never flushed.
//   * Every produced NaN is the canonical quiet NaN 0x7E00.
//   * h_add / h_mul convert both operands to binary32, combine there and
//     round once back to binary16. For binary16 inputs this equals a single
//     correctly rounded binary16 operation.
//   * h_fma forms the product exactly in binary64, adds the addend in
//     binary64 (one binary64 rounding) and rounds the binary64 result to
//     binary16. This binary64-intermediate definition is the normative,
//     bit-exact contract; it can differ from an infinitely precise fused
//     multiply-add only at binary64/binary16 double-rounding boundaries.
//   * Packed (Half2) ops are lanewise applications of the scalar ops and
//     are bit-identical to two scalar calls on the same lanes.

#include <bit>
#include <cstdint>
#include <vector>

#include "qgemm/errors.hpp"

namespace qgemm {

inline constexpr std::uint16_t kCanonicalNaN16 = 0x7E00;
inline constexpr std::uint16_t kPositiveInf16 = 0x7C00;
inline constexpr std::uint16_t kNegativeInf16 = 0xFC00;

// One binary16 value. Comparison is bitwise; +0 != -0 and NaN == NaN here,
// which is what every bit-exactness check in this project wants.
class Half {
 public:
  constexpr Half() = default;

  static constexpr Half from_bits(std::uint16_t b) {
    Half h;
    h.bits_ = b;
    return h;
  }

  constexpr std::uint16_t bits() const { return bits_; }

  constexpr bool is_nan() const {
    return (bits_ & 0x7C00u) == 0x7C00u && (bits_ & 0x03FFu) != 0;
  }

  friend constexpr bool operator==(Half, Half) = default;

 private:
  std::uint16_t bits_ = 0;
};

// Two binary16 lanes packed into one 32-bit unit; `lo` occupies the low
// 16 bits of the packed pattern.
struct Half2 {
  Half lo;
  Half hi;

  constexpr std::uint32_t bits() const {
    return static_cast<std::uint32_t>(lo.bits()) |
           (static_cast<std::uint32_t>(hi.bits()) << 16);
  }

  static constexpr Half2 from_bits(std::uint32_t b) {
    return Half2{Half::from_bits(static_cast<std::uint16_t>(b & 0xFFFFu)),
                 Half::from_bits(static_cast<std::uint16_t>(b >> 16))};
  }

  friend constexpr bool operator==(Half2, Half2) = default;
};

// Round a binary64 value to binary16 (RNE). Overflow goes to a signed
// infinity, NaN to the canonical quiet NaN.
inline Half f64_to_f16(double x) {
  const std::uint64_t b = std::bit_cast<std::uint64_t>(x);
  const auto sign = static_cast<std::uint16_t>((b >> 48) & 0x8000u);
  const std::uint64_t mag = b & 0x7FFFFFFFFFFFFFFFull;

  if (mag >= 0x7FF0000000000000ull) {  // inf or NaN
    if (mag > 0x7FF0000000000000ull) return Half::from_bits(kCanonicalNaN16);
    return Half::from_bits(sign | 0x7C00u);
  }
  // Finite. Magnitudes >= 65520 (midpoint above the largest finite half)
  // round to infinity; 0x40EFFE0000000000 is 65520.0.
  if (mag >= 0x40EFFE0000000000ull) return Half::from_bits(sign | 0x7C00u);

  const int exp = static_cast<int>(mag >> 52) - 1023;
  const std::uint64_t frac = mag & 0xFFFFFFFFFFFFFull;

  if (exp >= -14) {
    // Normal target. Keep 10 fraction bits, round the dropped 42 bits; a
    // round-up carry correctly bumps the exponent (overflow excluded above).
    auto val = static_cast<std::uint32_t>(
        (static_cast<std::uint32_t>(exp + 15) << 10) |
        static_cast<std::uint32_t>(frac >> 42));
    const std::uint64_t rem = frac & 0x3FFFFFFFFFFull;
    const std::uint64_t half = 0x20000000000ull;
    if (rem > half || (rem == half && (val & 1u))) ++val;
    return Half::from_bits(sign | static_cast<std::uint16_t>(val));
  }
  if (exp >= -25) {
    // Subnormal target: quantum 2^-24. A round-up from the largest subnormal
    // yields 0x0400, the smallest normal, which is the correct encoding.
    const std::uint64_t sig = frac | 0x10000000000000ull;
    const int shift = 42 + (-14 - exp);  // 43..53
    auto val = static_cast<std::uint32_t>(sig >> shift);
    const std::uint64_t rem = sig & ((1ull << shift) - 1u);
    const std::uint64_t half = 1ull << (shift - 1);
    if (rem > half || (rem == half && (val & 1u))) ++val;
    return Half::from_bits(sign | static_cast<std::uint16_t>(val));
  }
  return Half::from_bits(sign);  // rounds to a signed zero
}

// Round a binary32 value to binary16 (RNE). binary32 embeds exactly in
// binary64, so one rounding from the widened value is the single correct
// rounding from binary32.
inline Half f32_to_f16(float x) { return f64_to_f16(static_cast<double>(x)); }

// Exact widening conversion; binary32 is a superset of binary16.
inline float f16_to_f32(Half h) {
  const std::uint16_t b = h.bits();
  const std::uint32_t sign = static_cast<std::uint32_t>(b & 0x8000u) << 16;
  const std::uint32_t exp = (b >> 10) & 0x1Fu;
  const std::uint32_t frac = b & 0x3FFu;
  std::uint32_t out;
  if (exp == 0) {
    if (frac == 0) {
      out = sign;
    } else {
      // Subnormal: value is frac * 2^-24; normalize into binary32.
      const int top = 31 - std::countl_zero(frac);  // 0..9
      out = sign | (static_cast<std::uint32_t>(top + 103) << 23) |
            ((frac << (23 - top)) & 0x7FFFFFu);
    }
  } else if (exp == 31) {
    out = sign | 0x7F800000u | (frac << 13);  // inf / NaN, payload widened
  } else {
    out = sign | ((exp + 112) << 23) | (frac << 13);
  }
  return std::bit_cast<float>(out);
}

inline Half h_add(Half a, Half b) {
  return f32_to_f16(f16_to_f32(a) + f16_to_f32(b));
}

inline Half h_mul(Half a, Half b) {
  // The product of two binary16 values is exact in binary32.
  return f32_to_f16(f16_to_f32(a) * f16_to_f32(b));
}

inline Half h_fma(Half a, Half b, Half c) {
  // The binary16 product is exact in binary64, so `p + c` carries the single
  // binary64 rounding of a*b + c.
  const double p = static_cast<double>(f16_to_f32(a)) *
                   static_cast<double>(f16_to_f32(b));
  return f64_to_f16(p + static_cast<double>(f16_to_f32(c)));
}

inline Half low2half(Half2 v) { return v.lo; }
inline Half high2half(Half2 v) { return v.hi; }
inline Half2 halves2half2(Half lo, Half hi) { return Half2{lo, hi}; }

inline Half2 h2_add(Half2 a, Half2 b) {
  return Half2{h_add(a.lo, b.lo), h_add(a.hi, b.hi)};
}

inline Half2 h2_fma(Half2 a, Half2 b, Half2 c) {
  return Half2{h_fma(a.lo, b.lo, c.lo), h_fma(a.hi, b.hi, c.hi)};
}

// Dense row-major matrix of Half values.
class HalfMatrix {
 public:
  HalfMatrix() = default;
  HalfMatrix(std::uint32_t rows, std::uint32_t cols)
      : rows_(rows), cols_(cols), data_(std::size_t{rows} * cols) {}

  std::uint32_t rows() const { return rows_; }
  std::uint32_t cols() const { return cols_; }

  Half& at(std::uint32_t r, std::uint32_t c) {
    check(r, c);
    return data_[std::size_t{r} * cols_ + c];
  }
  Half at(std::uint32_t r, std::uint32_t c) const {
    check(r, c);
    return data_[std::size_t{r} * cols_ + c];
  }

  std::vector<Half>& data() { return data_; }
  const std::vector<Half>& data() const { return data_; }

  friend bool operator==(const HalfMatrix&, const HalfMatrix&) = default;

 private:
  void check(std::uint32_t r, std::uint32_t c) const {
    if (r >= rows_ || c >= cols_) throw IndexError("matrix index out of range");
  }

  std::uint32_t rows_ = 0;
  std::uint32_t cols_ = 0;
  std::vector<Half> data_;
};

}  // namespace qgemm
