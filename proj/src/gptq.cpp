#include "qgemm/gptq.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "qgemm/errors.hpp"

namespace qgemm::gptq {

namespace {

void check_shape(std::uint32_t k, std::uint32_t n, std::uint32_t g) {
  if (k == 0 || n == 0 || g == 0)
    throw ShapeError("k, n and group size must be positive");
  if (k % 8 != 0) throw ShapeError("k must be a multiple of 8");
  if (n % 8 != 0) throw ShapeError("n must be a multiple of 8");
  if (k % g != 0) throw ShapeError("group size must divide k");
}

void check_perm(const std::vector<std::uint32_t>& perm, std::uint32_t k) {
  if (perm.size() != k) throw PermError("perm length must equal k");
  std::vector<bool> seen(k, false);
  for (std::uint32_t idx : perm) {
    if (idx >= k || seen[idx])
      throw PermError("perm is not a permutation of 0..k-1");
    seen[idx] = true;
  }
}

}  // namespace

QuantizedWeight::QuantizedWeight(
    std::uint32_t k, std::uint32_t n, std::uint32_t group_size,
    std::vector<std::uint32_t> qweight, std::vector<Half> scales,
    std::vector<std::uint32_t> zeros,
    std::optional<std::vector<std::uint32_t>> perm)
    : k_(k),
      n_(n),
      group_size_(group_size),
      qweight_(std::move(qweight)),
      scales_(std::move(scales)),
      zeros_(std::move(zeros)),
      perm_(std::move(perm)) {
  check_shape(k_, n_, group_size_);
  const std::size_t groups = k_ / group_size_;
  if (qweight_.size() != std::size_t{k_ / 8} * n_)
    throw ShapeError("qweight word count mismatch");
  if (scales_.size() != groups * n_) throw ShapeError("scales count mismatch");
  if (zeros_.size() != groups * (n_ / 8))
    throw ShapeError("zeros word count mismatch");
  if (perm_) check_perm(*perm_, k_);
}

std::uint8_t QuantizedWeight::code(std::uint32_t row, std::uint32_t col) const {
  if (row >= k_ || col >= n_) throw IndexError("weight index out of range");
  const std::uint32_t word = qweight_[std::size_t{row / 8} * n_ + col];
  return static_cast<std::uint8_t>((word >> (4 * (row % 8))) & 0xFu);
}

std::uint8_t QuantizedWeight::zero_point(std::uint32_t group,
                                         std::uint32_t col) const {
  if (group >= groups() || col >= n_)
    throw IndexError("zero point index out of range");
  const std::uint32_t word = zeros_[std::size_t{group} * (n_ / 8) + col / 8];
  return static_cast<std::uint8_t>((word >> (4 * (col % 8))) & 0xFu);
}

Half QuantizedWeight::scale(std::uint32_t group, std::uint32_t col) const {
  if (group >= groups() || col >= n_)
    throw IndexError("scale index out of range");
  return scales_[std::size_t{group} * n_ + col];
}

Half QuantizedWeight::dequant_element(std::uint32_t row,
                                      std::uint32_t col) const {
  const std::uint32_t group = row / group_size_;
  const int diff = static_cast<int>(code(row, col)) -
                   static_cast<int>(zero_point(group, col));
  // q - z is in [-15, 15]; the binary32 product with a binary16 scale is
  // exact, so this is a single rounding.
  return f32_to_f16(f16_to_f32(scale(group, col)) * static_cast<float>(diff));
}

Half2 QuantizedWeight::dequant_pair(std::uint32_t row,
                                    std::uint32_t col) const {
  return Half2{dequant_element(row, col), dequant_element(row, col + 1)};
}

std::vector<Half2> QuantizedWeight::dequant_columns(std::uint32_t col,
                                                    std::uint32_t k_lo,
                                                    std::uint32_t k_hi) const {
  if (col % 4 != 0) throw IndexError("tile column must be a multiple of 4");
  if (col + 4 > n_ || k_lo > k_hi || k_hi > k_)
    throw IndexError("tile range out of bounds");
  std::vector<Half2> out;
  out.reserve(std::size_t{2} * (k_hi - k_lo));
  for (std::uint32_t row = k_lo; row < k_hi; ++row) {
    out.push_back(dequant_pair(row, col));
    out.push_back(dequant_pair(row, col + 2));
  }
  return out;
}

QuantizedWeight pack(const UnpackedWeight& u) {
  check_shape(u.k, u.n, u.group_size);
  const std::size_t groups = u.k / u.group_size;
  if (u.q.size() != std::size_t{u.k} * u.n)
    throw ShapeError("dense code count mismatch");
  if (u.scales.size() != groups * u.n) throw ShapeError("scales count mismatch");
  if (u.zeros.size() != groups * u.n)
    throw ShapeError("dense zero count mismatch");

  for (std::uint8_t v : u.q)
    if (v > 15) throw RangeError("code out of [0, 15]");
  for (std::uint8_t v : u.zeros)
    if (v > 15) throw RangeError("zero point out of [0, 15]");

  std::vector<std::uint32_t> qweight(std::size_t{u.k / 8} * u.n, 0u);
  for (std::uint32_t row = 0; row < u.k; ++row)
    for (std::uint32_t col = 0; col < u.n; ++col)
      qweight[std::size_t{row / 8} * u.n + col] |=
          static_cast<std::uint32_t>(u.q[std::size_t{row} * u.n + col])
          << (4 * (row % 8));

  std::vector<std::uint32_t> zeros(groups * (u.n / 8), 0u);
  for (std::size_t gr = 0; gr < groups; ++gr)
    for (std::uint32_t col = 0; col < u.n; ++col)
      zeros[gr * (u.n / 8) + col / 8] |=
          static_cast<std::uint32_t>(u.zeros[gr * u.n + col])
          << (4 * (col % 8));

  return QuantizedWeight(u.k, u.n, u.group_size, std::move(qweight), u.scales,
                         std::move(zeros), u.perm);
}

UnpackedWeight unpack(const QuantizedWeight& w) {
  UnpackedWeight u;
  u.k = w.k();
  u.n = w.n();
  u.group_size = w.group_size();
  u.q.resize(std::size_t{u.k} * u.n);
  for (std::uint32_t row = 0; row < u.k; ++row)
    for (std::uint32_t col = 0; col < u.n; ++col)
      u.q[std::size_t{row} * u.n + col] = w.code(row, col);
  u.scales = w.scales_raw();
  u.zeros.resize(std::size_t{w.groups()} * u.n);
  for (std::uint32_t gr = 0; gr < w.groups(); ++gr)
    for (std::uint32_t col = 0; col < u.n; ++col)
      u.zeros[std::size_t{gr} * u.n + col] = w.zero_point(gr, col);
  u.perm = w.perm();
  return u;
}

namespace {

constexpr char kMagic[4] = {'G', 'Q', '4', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {
      static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
      static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xFF),
                         static_cast<char>((v >> 8) & 0xFF)};
  out.write(bytes, 2);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw FormatError("truncated weight file");
  return static_cast<std::uint32_t>(bytes[0]) |
         (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

std::uint16_t get_u16(std::istream& in) {
  unsigned char bytes[2];
  in.read(reinterpret_cast<char*>(bytes), 2);
  if (!in) throw FormatError("truncated weight file");
  return static_cast<std::uint16_t>(static_cast<std::uint16_t>(bytes[0]) |
                                    (static_cast<std::uint16_t>(bytes[1]) << 8));
}

}  // namespace

void serialize(const QuantizedWeight& w, std::ostream& out) {
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, w.k());
  put_u32(out, w.n());
  put_u32(out, w.group_size());
  put_u32(out, w.perm() ? 1u : 0u);
  for (std::uint32_t word : w.qweight_words()) put_u32(out, word);
  for (Half s : w.scales_raw()) put_u16(out, s.bits());
  for (std::uint32_t word : w.zeros_words()) put_u32(out, word);
  if (w.perm())
    for (std::uint32_t idx : *w.perm()) put_u32(out, idx);
  if (!out) throw FormatError("write failed");
}

QuantizedWeight deserialize(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || magic[0] != 'G' || magic[1] != 'Q' || magic[2] != '4' ||
      magic[3] != 'S')
    throw FormatError("bad magic");
  if (get_u32(in) != kVersion) throw FormatError("unsupported version");
  const std::uint32_t k = get_u32(in);
  const std::uint32_t n = get_u32(in);
  const std::uint32_t g = get_u32(in);
  const std::uint32_t flags = get_u32(in);
  check_shape(k, n, g);
  const std::size_t groups = k / g;

  std::vector<std::uint32_t> qweight(std::size_t{k / 8} * n);
  for (auto& word : qweight) word = get_u32(in);
  std::vector<Half> scales(groups * n);
  for (auto& s : scales) s = Half::from_bits(get_u16(in));
  std::vector<std::uint32_t> zeros(groups * (n / 8));
  for (auto& word : zeros) word = get_u32(in);
  std::optional<std::vector<std::uint32_t>> perm;
  if (flags & 1u) {
    perm.emplace(k);
    for (auto& idx : *perm) idx = get_u32(in);
  }
  return QuantizedWeight(k, n, g, std::move(qweight), std::move(scales),
                         std::move(zeros), std::move(perm));
}

void save_file(const QuantizedWeight& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);
  serialize(w, out);
}

QuantizedWeight load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);
  return deserialize(in);
}

}  // namespace qgemm::gptq
