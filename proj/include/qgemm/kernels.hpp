#pragma once

// GPTQ 4-bit GEMM kernel family: the baseline kernel and its SMB (shared
// memory buffered store), VML (vectorized A-tile loading) and ILA (packed
// instruction issue) variants, all running on the simt harness, plus the
// reference oracles used to check them.
//
// Blocking: the grid is ceil(M/m_count) x (N/4) x ceil(K/bk) blocks in
// ascending id order (M major, then N, then K). Each block stages an A
// tile in shared memory, runs the MAC loop over a fixed 4-column slice of
// the dequantized B, and stores partial sums to C with global atomic adds.
// Each thread owns `elems_per_thread` consecutive K elements of the tile.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qgemm/gptq.hpp"
#include "qgemm/half.hpp"
#include "qgemm/simt.hpp"

namespace qgemm::kernels {

// Rows per block is capped so per-thread accumulators stay in fixed-size
// storage; the shared-memory cap binds long before this does.
inline constexpr std::uint32_t kMaxMCount = 8;

struct TileParams {
  std::uint32_t threads = 64;  // threads per block (T)
  std::uint32_t bk = 128;      // K extent per block; bk = T * elems_per_thread
  std::uint32_t m_count = 2;   // output rows per block

  std::uint32_t elems_per_thread() const { return bk / threads; }

  friend bool operator==(const TileParams&, const TileParams&) = default;
};

struct VariantFlags {
  bool smb = false;
  bool vml = false;
  bool ila = false;

  static constexpr VariantFlags baseline() { return {}; }
  static constexpr VariantFlags opt4gptq() { return {true, true, true}; }

  // All 8 combinations, baseline first, in (smb, vml, ila) bit order.
  static std::array<VariantFlags, 8> all();

  std::string name() const;  // "baseline", "smb", "smb+vml+ila", ...

  friend bool operator==(const VariantFlags&, const VariantFlags&) = default;
};

struct GemmProblem {
  HalfMatrix a;             // M x K activations
  gptq::QuantizedWeight b;  // K x N quantized weights

  std::uint32_t m() const { return a.rows(); }
  std::uint32_t k() const { return b.k(); }
  std::uint32_t n() const { return b.n(); }
};

struct GemmResult {
  HalfMatrix c;  // M x N
  sim::LaunchStats stats;
};

// Throws ShapeError unless the tile divides cleanly, m_count is in range,
// the problem dimensions are consistent, and (when vml is set) the
// per-thread element count is even.
void validate(const GemmProblem& problem, const TileParams& tile,
              VariantFlags flags);

// Runs one GEMM on the simulator: C = A * dequant(B), with the variant
// selected by `flags`. C starts zeroed on the host.
GemmResult gemm_half_q_half(const GemmProblem& problem, const TileParams& tile,
                            VariantFlags flags, sim::DeviceContext& device);

// Ground truth: binary32 accumulation in ascending k, honoring b.perm the
// same way the kernels do (C[m][n] = sum_k A[m][perm[k]] * deq(B)[k][n]).
// Row-major M x N.
std::vector<float> oracle_gemm_f32(const GemmProblem& problem);

// Straight-line (no simulator) recomputation of the exact binary16
// accumulation order the kernel uses for this tile and flag combination,
// for bit-exact cross-checks. Only smb (and the permutation) affect the
// result; vml and ila never change values.
HalfMatrix oracle_gemm_f16_canonical(const GemmProblem& problem,
                                     const TileParams& tile,
                                     VariantFlags flags);

// max over elements of |f32(c) - reference|.
double max_abs_error(const HalfMatrix& c, const std::vector<float>& reference);

}  // namespace qgemm::kernels
