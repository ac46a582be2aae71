#pragma once

// GPTQ 4-bit weight container: nibble-packed codes, group-wise half scales,
// nibble-packed zero points, optional activation-order permutation, and the
// "GQ4S" binary file format.
//
// Dequantization convention: w = s * (q - z), with no offset applied to the
// stored zero point. Nibble order is little-nibble-first: nibble i of a
// 32-bit qweight word at (w, c) holds the code of element (8w + i, c), and
// nibble j of a zeros word at (gr, wc) holds the zero of column 8wc + j.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qgemm/half.hpp"

namespace qgemm::gptq {

class QuantizedWeight {
 public:
  // Takes pre-packed storage; validates shapes, divisibility and perm.
  QuantizedWeight(std::uint32_t k, std::uint32_t n, std::uint32_t group_size,
                  std::vector<std::uint32_t> qweight, std::vector<Half> scales,
                  std::vector<std::uint32_t> zeros,
                  std::optional<std::vector<std::uint32_t>> perm);

  std::uint32_t k() const { return k_; }
  std::uint32_t n() const { return n_; }
  std::uint32_t group_size() const { return group_size_; }
  std::uint32_t groups() const { return k_ / group_size_; }

  // 4-bit code of element (row, col).
  std::uint8_t code(std::uint32_t row, std::uint32_t col) const;
  // 4-bit zero point of (group, col).
  std::uint8_t zero_point(std::uint32_t group, std::uint32_t col) const;
  Half scale(std::uint32_t group, std::uint32_t col) const;

  // s * (q - z): the small-integer difference is exact, the product is
  // formed in binary32 and rounded once to binary16.
  Half dequant_element(std::uint32_t row, std::uint32_t col) const;

  // Columns (col, col+1) of one row as a Half2, lanewise dequant_element.
  Half2 dequant_pair(std::uint32_t row, std::uint32_t col) const;

  // Four-column tile stream: for each k in [k_lo, k_hi) yields the pair for
  // columns (col, col+1) followed by the pair for (col+2, col+3).
  // col must be a multiple of 4.
  std::vector<Half2> dequant_columns(std::uint32_t col, std::uint32_t k_lo,
                                     std::uint32_t k_hi) const;

  const std::optional<std::vector<std::uint32_t>>& perm() const {
    return perm_;
  }

  const std::vector<std::uint32_t>& qweight_words() const { return qweight_; }
  const std::vector<Half>& scales_raw() const { return scales_; }
  const std::vector<std::uint32_t>& zeros_words() const { return zeros_; }

  friend bool operator==(const QuantizedWeight&,
                         const QuantizedWeight&) = default;

 private:
  std::uint32_t k_ = 0;
  std::uint32_t n_ = 0;
  std::uint32_t group_size_ = 0;
  std::vector<std::uint32_t> qweight_;  // [k/8][n] row-major
  std::vector<Half> scales_;            // [k/g][n] row-major
  std::vector<std::uint32_t> zeros_;    // [k/g][n/8] row-major
  std::optional<std::vector<std::uint32_t>> perm_;
};

// Unpacked (dense) view used by pack/unpack.
struct UnpackedWeight {
  std::uint32_t k = 0;
  std::uint32_t n = 0;
  std::uint32_t group_size = 0;
  std::vector<std::uint8_t> q;      // [k][n] row-major, values in [0, 15]
  std::vector<Half> scales;         // [k/g][n]
  std::vector<std::uint8_t> zeros;  // [k/g][n] row-major, values in [0, 15]
  std::optional<std::vector<std::uint32_t>> perm;
};

QuantizedWeight pack(const UnpackedWeight& u);
UnpackedWeight unpack(const QuantizedWeight& w);

// "GQ4S" little-endian layout: magic, version u32 = 1, k, n, g, flags
// (bit 0 = perm present), qweight words, scales as raw 16-bit patterns,
// zeros words, then perm as u32[k] if present.
void serialize(const QuantizedWeight& w, std::ostream& out);
QuantizedWeight deserialize(std::istream& in);

void save_file(const QuantizedWeight& w, const std::string& path);
QuantizedWeight load_file(const std::string& path);

}  // namespace qgemm::gptq
