#include <sstream>

#include <doctest.h>

#include "oracles.hpp"
#include "qgemm/bench.hpp"
#include "qgemm/errors.hpp"
#include "qgemm/gptq.hpp"
#include "qgemm/rng.hpp"

using namespace qgemm;
using gptq::QuantizedWeight;
using gptq::UnpackedWeight;

namespace {

UnpackedWeight dense(std::uint32_t k, std::uint32_t n, std::uint32_t g) {
  UnpackedWeight u;
  u.k = k;
  u.n = n;
  u.group_size = g;
  u.q.assign(std::size_t{k} * n, 0);
  u.zeros.assign(std::size_t{k / g} * n, 0);
  u.scales.assign(std::size_t{k / g} * n, f32_to_f16(1.0f));
  return u;
}

UnpackedWeight random_dense(SplitMix64& rng, std::uint32_t k, std::uint32_t n,
                            std::uint32_t g, bool with_perm) {
  UnpackedWeight u = dense(k, n, g);
  for (auto& q : u.q) q = next_code(rng);
  for (auto& z : u.zeros) z = next_code(rng);
  for (auto& s : u.scales) s = next_scale(rng);
  if (with_perm) u.perm = random_permutation(rng, k);
  return u;
}

}  // namespace

TEST_SUITE("gptq_format") {

TEST_CASE("nibble layout is little-nibble-first") {
  // q[row][col] = row for an 8x8 block puts 0x76543210 in every word.
  UnpackedWeight u = dense(8, 8, 8);
  for (std::uint32_t row = 0; row < 8; ++row)
    for (std::uint32_t col = 0; col < 8; ++col)
      u.q[row * 8 + col] = static_cast<std::uint8_t>(row);
  for (std::uint32_t col = 0; col < 8; ++col)
    u.zeros[col] = static_cast<std::uint8_t>(col);
  const QuantizedWeight w = gptq::pack(u);
  for (std::uint32_t col = 0; col < 8; ++col)
    CHECK(w.qweight_words()[col] == 0x76543210u);
  CHECK(w.zeros_words()[0] == 0x76543210u);
  for (std::uint32_t row = 0; row < 8; ++row)
    for (std::uint32_t col = 0; col < 8; ++col)
      CHECK(w.code(row, col) == row);
  for (std::uint32_t col = 0; col < 8; ++col)
    CHECK(w.zero_point(0, col) == col);
}

TEST_CASE("all-zero codes pack to all-zero words") {
  const QuantizedWeight w = gptq::pack(dense(8, 8, 8));
  for (const auto word : w.qweight_words()) CHECK(word == 0u);
}

TEST_CASE("pack/unpack roundtrip") {
  UnpackedWeight u = dense(16, 8, 8);
  for (std::uint32_t i = 0; i < 16; ++i)
    for (std::uint32_t j = 0; j < 8; ++j)
      u.q[i * 8 + j] = static_cast<std::uint8_t>((i + j) % 16);
  const UnpackedWeight back = gptq::unpack(gptq::pack(u));
  CHECK(back.q == u.q);
  CHECK(back.zeros == u.zeros);
  CHECK(back.scales == u.scales);
  CHECK(!back.perm.has_value());
}

TEST_CASE("pack/unpack roundtrip property over random containers") {
  SplitMix64 rng(0xBEEF);
  for (int iter = 0; iter < 50; ++iter) {
    const std::uint32_t k = 8 * (1 + static_cast<std::uint32_t>(rng.next() % 8));
    const std::uint32_t n = 8 * (1 + static_cast<std::uint32_t>(rng.next() % 4));
    const std::uint32_t g = (iter % 2) ? k : 8;
    const UnpackedWeight u = random_dense(rng, k, n, g, iter % 3 == 0);
    const QuantizedWeight w = gptq::pack(u);
    const UnpackedWeight back = gptq::unpack(w);
    CHECK(back.q == u.q);
    CHECK(back.zeros == u.zeros);
    CHECK(back.scales == u.scales);
    CHECK(back.perm == u.perm);
    CHECK(gptq::pack(back) == w);
  }
}

TEST_CASE("perm is stored verbatim") {
  UnpackedWeight u = dense(16, 8, 16);
  std::vector<std::uint32_t> reversed(16);
  for (std::uint32_t i = 0; i < 16; ++i) reversed[i] = 15 - i;
  u.perm = reversed;
  const QuantizedWeight w = gptq::pack(u);
  REQUIRE(w.perm().has_value());
  CHECK(*w.perm() == reversed);
}

TEST_CASE("constructor and pack reject invalid inputs") {
  CHECK_THROWS_AS((void)gptq::pack(dense(12, 8, 4)), ShapeError);  // k % 8
  CHECK_THROWS_AS((void)gptq::pack(dense(16, 12, 4)), ShapeError);  // n % 8
  CHECK_THROWS_AS((void)gptq::pack(dense(16, 8, 3)), ShapeError);   // g | k
  UnpackedWeight bad_code = dense(8, 8, 8);
  bad_code.q[5] = 16;
  CHECK_THROWS_AS((void)gptq::pack(bad_code), RangeError);
  UnpackedWeight bad_zero = dense(8, 8, 8);
  bad_zero.zeros[2] = 200;
  CHECK_THROWS_AS((void)gptq::pack(bad_zero), RangeError);
  UnpackedWeight bad_perm = dense(8, 8, 8);
  bad_perm.perm = std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5, 6, 6};
  CHECK_THROWS_AS((void)gptq::pack(bad_perm), PermError);
  UnpackedWeight short_perm = dense(8, 8, 8);
  short_perm.perm = std::vector<std::uint32_t>{0, 1};
  CHECK_THROWS_AS((void)gptq::pack(short_perm), PermError);
}

TEST_CASE("dequant fixed points") {
  UnpackedWeight u = dense(8, 8, 8);
  u.q[0] = 5;
  u.zeros[0] = 3;
  u.scales[0] = f32_to_f16(0.5f);
  const QuantizedWeight w = gptq::pack(u);
  CHECK(w.dequant_element(0, 0).bits() == f32_to_f16(1.0f).bits());

  // q == z gives +0 regardless of the (positive) scale.
  UnpackedWeight uz = dense(8, 8, 8);
  uz.q.assign(uz.q.size(), 7);
  uz.zeros.assign(uz.zeros.size(), 7);
  uz.scales[3] = f32_to_f16(0.123f);
  const QuantizedWeight wz = gptq::pack(uz);
  CHECK(wz.dequant_element(0, 3).bits() == 0x0000);

  // Scale at the bottom of the normal range.
  UnpackedWeight us = dense(8, 8, 8);
  us.q[0] = 15;
  us.scales[0] = Half::from_bits(0x0400);  // 2^-14
  const QuantizedWeight ws = gptq::pack(us);
  CHECK(ws.dequant_element(0, 0).bits() ==
        testref::ref_round_f64_to_f16(15.0 * 0x1p-14));

  // Subnormal scale drives the product into the subnormal range.
  UnpackedWeight ut = dense(8, 8, 8);
  ut.q[0] = 3;
  ut.scales[0] = Half::from_bits(0x0010);  // 2^-20
  const QuantizedWeight wt = gptq::pack(ut);
  CHECK(wt.dequant_element(0, 0).bits() ==
        testref::ref_round_f64_to_f16(3.0 * 0x1p-20));
}

TEST_CASE("dequant matches the binary64 oracle on random containers") {
  SplitMix64 rng(0xD0D0);
  std::uint64_t mismatch = 0;
  for (int iter = 0; iter < 10; ++iter) {
    const UnpackedWeight u = random_dense(rng, 32, 16, 8, false);
    const QuantizedWeight w = gptq::pack(u);
    for (std::uint32_t row = 0; row < 32; ++row) {
      for (std::uint32_t col = 0; col < 16; ++col) {
        const std::uint32_t gr = row / 8;
        const double want =
            testref::ref_f16_to_f64(u.scales[gr * 16 + col].bits()) *
            (static_cast<int>(u.q[row * 16 + col]) -
             static_cast<int>(u.zeros[gr * 16 + col]));
        if (w.dequant_element(row, col).bits() !=
            testref::ref_round_f64_to_f16(want))
          ++mismatch;
      }
    }
  }
  CHECK(mismatch == 0);
}

TEST_CASE("dequant is monotone in q for positive scales") {
  for (const float scale : {0.25f, 1.0f, 0x1p-13f}) {
    UnpackedWeight u = dense(16, 8, 16);
    u.zeros[0] = 8;
    u.scales[0] = f32_to_f16(scale);
    for (std::uint32_t row = 0; row < 16; ++row)
      u.q[row * 8] = static_cast<std::uint8_t>(row);
    const QuantizedWeight w = gptq::pack(u);
    float prev = -std::numeric_limits<float>::infinity();
    for (std::uint32_t row = 0; row < 16; ++row) {
      const float v = f16_to_f32(w.dequant_element(row, 0));
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("dequant_columns matches dequant_element lanewise") {
  SplitMix64 rng(0xC0C0);
  const UnpackedWeight u = random_dense(rng, 24, 16, 8, false);
  const QuantizedWeight w = gptq::pack(u);
  const auto stream = w.dequant_columns(4, 3, 19);
  REQUIRE(stream.size() == 2 * (19 - 3));
  std::size_t idx = 0;
  for (std::uint32_t row = 3; row < 19; ++row) {
    CHECK(stream[idx].lo == w.dequant_element(row, 4));
    CHECK(stream[idx].hi == w.dequant_element(row, 5));
    CHECK(stream[idx + 1].lo == w.dequant_element(row, 6));
    CHECK(stream[idx + 1].hi == w.dequant_element(row, 7));
    idx += 2;
  }

  // Zero codes with zero zero-points give a zero stream.
  const QuantizedWeight wz = gptq::pack(dense(8, 8, 8));
  for (const Half2 v : wz.dequant_columns(0, 0, 8)) {
    CHECK(v.lo.bits() == 0);
    CHECK(v.hi.bits() == 0);
  }

  // Single group: one scale per column across all of k.
  UnpackedWeight ug = dense(16, 8, 16);
  ug.q.assign(ug.q.size(), 2);
  ug.scales.assign(ug.scales.size(), f32_to_f16(0.25f));
  const QuantizedWeight wg = gptq::pack(ug);
  for (const Half2 v : wg.dequant_columns(0, 0, 16)) {
    CHECK(v.lo.bits() == f32_to_f16(0.5f).bits());
    CHECK(v.hi.bits() == f32_to_f16(0.5f).bits());
  }

  CHECK_THROWS_AS((void)w.dequant_columns(2, 0, 8), IndexError);   // col % 4
  CHECK_THROWS_AS((void)w.dequant_columns(0, 0, 25), IndexError);  // k_hi > k
  CHECK_THROWS_AS((void)w.dequant_element(24, 0), IndexError);
}

TEST_CASE("serialize/deserialize is a bit-exact roundtrip") {
  SplitMix64 rng(0xABBA);
  for (int iter = 0; iter < 20; ++iter) {
    const std::uint32_t k = 8 * (1 + static_cast<std::uint32_t>(rng.next() % 6));
    const std::uint32_t n = 8 * (1 + static_cast<std::uint32_t>(rng.next() % 3));
    const UnpackedWeight u = random_dense(rng, k, n, 8, iter % 2 == 0);
    const QuantizedWeight w = gptq::pack(u);
    std::ostringstream out(std::ios::binary);
    gptq::serialize(w, out);
    std::istringstream in(out.str(), std::ios::binary);
    CHECK(gptq::deserialize(in) == w);
  }
}

TEST_CASE("deserialize rejects malformed files") {
  const QuantizedWeight w = gptq::pack(dense(8, 8, 8));
  std::ostringstream out(std::ios::binary);
  gptq::serialize(w, out);
  const std::string bytes = out.str();

  std::istringstream bad_magic("XXXX" + bytes.substr(4), std::ios::binary);
  CHECK_THROWS_AS((void)gptq::deserialize(bad_magic), FormatError);

  std::string v2 = bytes;
  v2[4] = 2;  // version
  std::istringstream bad_version(v2, std::ios::binary);
  CHECK_THROWS_AS((void)gptq::deserialize(bad_version), FormatError);

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3),
                               std::ios::binary);
  CHECK_THROWS_AS((void)gptq::deserialize(truncated), FormatError);

  std::istringstream empty("", std::ios::binary);
  CHECK_THROWS_AS((void)gptq::deserialize(empty), FormatError);
}

}  // TEST_SUITE
