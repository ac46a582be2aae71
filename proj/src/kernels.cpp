#include "qgemm/kernels.hpp"

#include <algorithm>

#include "qgemm/errors.hpp"

namespace qgemm::kernels {

std::array<VariantFlags, 8> VariantFlags::all() {
  std::array<VariantFlags, 8> out;
  for (std::uint32_t bits = 0; bits < 8; ++bits)
    out[bits] = VariantFlags{(bits & 1u) != 0, (bits & 2u) != 0,
                             (bits & 4u) != 0};
  return out;
}

std::string VariantFlags::name() const {
  if (!smb && !vml && !ila) return "baseline";
  std::string s;
  if (smb) s += "smb";
  if (vml) s += s.empty() ? "vml" : "+vml";
  if (ila) s += s.empty() ? "ila" : "+ila";
  return s;
}

void validate(const GemmProblem& problem, const TileParams& tile,
              VariantFlags flags) {
  if (tile.threads == 0 || tile.bk == 0 || tile.m_count == 0)
    throw ShapeError("tile parameters must be positive");
  if (tile.m_count > kMaxMCount)
    throw ShapeError("m_count exceeds " + std::to_string(kMaxMCount));
  if (tile.bk % tile.threads != 0)
    throw ShapeError("bk must be a multiple of the thread count");
  if (flags.vml && tile.elems_per_thread() % 2 != 0)
    throw ShapeError("vml requires an even per-thread element count");
  if (problem.a.rows() == 0) throw ShapeError("M must be at least 1");
  if (problem.a.cols() != problem.b.k())
    throw ShapeError("A columns must equal B rows");
}

namespace {

constexpr std::uint32_t ceil_div(std::uint32_t a, std::uint32_t b) {
  return (a + b - 1) / b;
}

struct Grid {
  std::uint32_t m_blocks, n_blocks, k_blocks;
  std::uint32_t result_base;  // shared offset of block_result, kept even
  std::uint32_t shared_elems;

  Grid(const GemmProblem& p, const TileParams& t, VariantFlags f)
      : m_blocks(ceil_div(p.m(), t.m_count)),
        n_blocks(p.n() / 4),
        k_blocks(ceil_div(p.k(), t.bk)),
        result_base((t.m_count * t.bk + 1u) & ~1u),
        shared_elems(f.smb ? result_base + 4 * t.m_count
                           : t.m_count * t.bk) {}

  std::uint32_t num_blocks() const { return m_blocks * n_blocks * k_blocks; }
};

struct KernelEnv {
  const GemmProblem* problem;
  TileParams tile;
  VariantFlags flags;
  Grid grid;
  sim::BufferId a_buf;
  sim::BufferId c_buf;
};

sim::ThreadProgram gemm_kernel(sim::ThreadContext& tc, const KernelEnv& env) {
  const GemmProblem& prob = *env.problem;
  const gptq::QuantizedWeight& b = prob.b;
  const TileParams& tile = env.tile;
  const std::uint32_t k_dim = prob.k();
  const std::uint32_t n_dim = prob.n();
  const std::uint32_t e = tile.elems_per_thread();
  const std::uint32_t t = tc.thread_id();

  const std::uint32_t bid = tc.block_id();
  const std::uint32_t kb = bid % env.grid.k_blocks;
  const std::uint32_t nb = (bid / env.grid.k_blocks) % env.grid.n_blocks;
  const std::uint32_t mb = bid / (env.grid.k_blocks * env.grid.n_blocks);

  const std::uint32_t offset_m = mb * tile.m_count;
  const std::uint32_t offset_k = kb * tile.bk;
  const std::uint32_t n = nb * 4;
  const std::uint32_t end_k = std::min(offset_k + tile.bk, k_dim);
  const std::uint32_t m_rows =
      std::min(offset_m + tile.m_count, prob.m()) - offset_m;
  const std::uint32_t bk_extent = end_k - offset_k;

  // This thread's slice of the K tile and how much of it is in range.
  const std::uint32_t base = t * e;
  const std::uint32_t valid =
      base < bk_extent ? std::min(e, bk_extent - base) : 0;
  const std::uint32_t* perm = b.perm() ? b.perm()->data() : nullptr;

  // Phase 0: stage the A tile into block_a[m][bk]; out-of-range tail slots
  // are zero-filled without issuing loads.
  for (std::uint32_t m = 0; m < m_rows; ++m) {
    const std::size_t a_row = std::size_t{offset_m + m} * k_dim;
    const std::size_t tile_row = std::size_t{m} * tile.bk;
    if (env.flags.vml && perm == nullptr) {
      // Vectorized loading: one half2 covers two contiguous elements,
      // split lanewise into shared memory.
      for (std::uint32_t j = 0; j < e; j += 2) {
        if (j + 2 <= valid) {
          const Half2 pair =
              tc.global_load_half2(env.a_buf, a_row + offset_k + base + j);
          tc.shared_write(tile_row + base + j, low2half(pair));
          tc.shared_write(tile_row + base + j + 1, high2half(pair));
        } else if (j < valid) {
          // Lone in-range element at the tile edge: scalar load, zero pad.
          tc.shared_write(
              tile_row + base + j,
              tc.global_load_half(env.a_buf, a_row + offset_k + base + j));
          tc.shared_write(tile_row + base + j + 1, Half{});
        } else {
          tc.shared_write(tile_row + base + j, Half{});
          tc.shared_write(tile_row + base + j + 1, Half{});
        }
      }
    } else {
      // Scalar loading; with a permutation the gather is non-contiguous,
      // so loads stay 16-bit even under vml.
      for (std::uint32_t j = 0; j < e; ++j) {
        if (j < valid) {
          const std::uint32_t k_idx = offset_k + base + j;
          const std::size_t src = perm ? perm[k_idx] : k_idx;
          tc.shared_write(tile_row + base + j,
                          tc.global_load_half(env.a_buf, a_row + src));
        } else {
          tc.shared_write(tile_row + base + j, Half{});
        }
      }
    }
  }
  if (env.flags.smb && t == 0) {
    // Thread 0 initializes the block accumulators; the harness does not
    // pre-zero shared memory.
    for (std::uint32_t m = 0; m < m_rows; ++m) {
      tc.shared_write2(env.grid.result_base + 4 * m, Half2{});
      tc.shared_write2(env.grid.result_base + 4 * m + 2, Half2{});
    }
  }
  co_await tc.barrier();

  // Phase 1: MAC loop. The activation broadcasts into both lanes; the two
  // half2 accumulators cover the block's four output columns.
  const sim::Issue issue =
      env.flags.ila ? sim::Issue::packed : sim::Issue::lowered;
  std::array<Half2, kMaxMCount> result01{};
  std::array<Half2, kMaxMCount> result23{};
  for (std::uint32_t m = 0; m < m_rows; ++m) {
    const std::size_t tile_row = std::size_t{m} * tile.bk;
    for (std::uint32_t j = 0; j < valid; ++j) {
      const std::uint32_t k_local = base + j;
      const Half a_val = tc.shared_read(tile_row + k_local);
      const Half2 a2 = halves2half2(a_val, a_val);
      const Half2 b01 = b.dequant_pair(offset_k + k_local, n);
      const Half2 b23 = b.dequant_pair(offset_k + k_local, n + 2);
      result01[m] = tc.fma2(a2, b01, result01[m], issue);
      result23[m] = tc.fma2(a2, b23, result23[m], issue);
    }
  }

  const bool active = valid > 0;
  if (!env.flags.smb) {
    // Baseline store: every thread with work writes its own partials.
    if (active) {
      for (std::uint32_t m = 0; m < m_rows; ++m) {
        const std::size_t out = std::size_t{offset_m + m} * n_dim + n;
        tc.global_atomic_add_half2(env.c_buf, out, result01[m]);
        tc.global_atomic_add_half2(env.c_buf, out + 2, result23[m]);
      }
    }
    co_return;
  }

  // SMB store: threads fold their partials into the shared accumulators in
  // ascending thread order, then thread 0 issues the only global atomics.
  if (active) {
    for (std::uint32_t m = 0; m < m_rows; ++m) {
      const std::size_t r0 = env.grid.result_base + 4 * m;
      tc.shared_write2(r0, tc.add2(tc.shared_read2(r0), result01[m], issue));
      tc.shared_write2(r0 + 2,
                       tc.add2(tc.shared_read2(r0 + 2), result23[m], issue));
    }
  }
  co_await tc.barrier();
  if (t == 0) {
    for (std::uint32_t m = 0; m < m_rows; ++m) {
      const std::size_t out = std::size_t{offset_m + m} * n_dim + n;
      const std::size_t r0 = env.grid.result_base + 4 * m;
      tc.global_atomic_add_half2(env.c_buf, out, tc.shared_read2(r0));
      tc.global_atomic_add_half2(env.c_buf, out + 2, tc.shared_read2(r0 + 2));
    }
  }
}

}  // namespace

GemmResult gemm_half_q_half(const GemmProblem& problem, const TileParams& tile,
                            VariantFlags flags, sim::DeviceContext& device) {
  validate(problem, tile, flags);
  const Grid grid(problem, tile, flags);

  KernelEnv env{&problem, tile, flags, grid, {}, {}};
  env.a_buf = device.alloc_global("A", problem.a.data());
  env.c_buf = device.alloc_global(
      "C", std::size_t{problem.m()} * problem.n());  // host pre-zeroes C

  sim::LaunchConfig cfg;
  cfg.num_blocks = grid.num_blocks();
  cfg.threads_per_block = tile.threads;
  cfg.shared_bytes = 2 * grid.shared_elems;

  const sim::LaunchStats stats = device.launch(
      cfg, [&env](sim::ThreadContext& tc) { return gemm_kernel(tc, env); });

  HalfMatrix c(problem.m(), problem.n());
  c.data() = device.global(env.c_buf);
  return GemmResult{std::move(c), stats};
}

std::vector<float> oracle_gemm_f32(const GemmProblem& problem) {
  const std::uint32_t m_dim = problem.m();
  const std::uint32_t k_dim = problem.k();
  const std::uint32_t n_dim = problem.n();
  const auto& perm = problem.b.perm();

  // Dequantize B once.
  std::vector<float> bw(std::size_t{k_dim} * n_dim);
  for (std::uint32_t k = 0; k < k_dim; ++k)
    for (std::uint32_t n = 0; n < n_dim; ++n)
      bw[std::size_t{k} * n_dim + n] =
          f16_to_f32(problem.b.dequant_element(k, n));

  std::vector<float> c(std::size_t{m_dim} * n_dim, 0.0f);
  for (std::uint32_t m = 0; m < m_dim; ++m) {
    for (std::uint32_t n = 0; n < n_dim; ++n) {
      float acc = 0.0f;
      for (std::uint32_t k = 0; k < k_dim; ++k) {
        const std::uint32_t src = perm ? (*perm)[k] : k;
        acc += f16_to_f32(problem.a.at(m, src)) * bw[std::size_t{k} * n_dim + n];
      }
      c[std::size_t{m} * n_dim + n] = acc;
    }
  }
  return c;
}

HalfMatrix oracle_gemm_f16_canonical(const GemmProblem& problem,
                                     const TileParams& tile,
                                     VariantFlags flags) {
  validate(problem, tile, flags);
  const Grid grid(problem, tile, flags);
  const std::uint32_t e = tile.elems_per_thread();
  const auto& perm = problem.b.perm();

  HalfMatrix c(problem.m(), problem.n());

  const auto c_pair = [&](std::uint32_t row, std::uint32_t col) {
    return Half2{c.at(row, col), c.at(row, col + 1)};
  };
  const auto set_c_pair = [&](std::uint32_t row, std::uint32_t col, Half2 v) {
    c.at(row, col) = v.lo;
    c.at(row, col + 1) = v.hi;
  };

  for (std::uint32_t mb = 0; mb < grid.m_blocks; ++mb) {
    for (std::uint32_t nb = 0; nb < grid.n_blocks; ++nb) {
      for (std::uint32_t kb = 0; kb < grid.k_blocks; ++kb) {
        const std::uint32_t offset_m = mb * tile.m_count;
        const std::uint32_t offset_k = kb * tile.bk;
        const std::uint32_t n = nb * 4;
        const std::uint32_t m_rows =
            std::min(offset_m + tile.m_count, problem.m()) - offset_m;
        const std::uint32_t bk_extent =
            std::min(offset_k + tile.bk, problem.k()) - offset_k;

        std::array<Half2, kMaxMCount> block01{};
        std::array<Half2, kMaxMCount> block23{};

        for (std::uint32_t t = 0; t < tile.threads; ++t) {
          const std::uint32_t base = t * e;
          const std::uint32_t valid =
              base < bk_extent ? std::min(e, bk_extent - base) : 0;
          if (valid == 0) continue;

          std::array<Half2, kMaxMCount> r01{};
          std::array<Half2, kMaxMCount> r23{};
          for (std::uint32_t m = 0; m < m_rows; ++m) {
            for (std::uint32_t j = 0; j < valid; ++j) {
              const std::uint32_t k_idx = offset_k + base + j;
              const std::uint32_t src = perm ? (*perm)[k_idx] : k_idx;
              const Half a_val = problem.a.at(offset_m + m, src);
              const Half2 a2 = halves2half2(a_val, a_val);
              r01[m] = h2_fma(a2, problem.b.dequant_pair(k_idx, n), r01[m]);
              r23[m] = h2_fma(a2, problem.b.dequant_pair(k_idx, n + 2), r23[m]);
            }
          }

          if (flags.smb) {
            for (std::uint32_t m = 0; m < m_rows; ++m) {
              block01[m] = h2_add(block01[m], r01[m]);
              block23[m] = h2_add(block23[m], r23[m]);
            }
          } else {
            for (std::uint32_t m = 0; m < m_rows; ++m) {
              const std::uint32_t row = offset_m + m;
              set_c_pair(row, n, h2_add(c_pair(row, n), r01[m]));
              set_c_pair(row, n + 2, h2_add(c_pair(row, n + 2), r23[m]));
            }
          }
        }

        if (flags.smb) {
          for (std::uint32_t m = 0; m < m_rows; ++m) {
            const std::uint32_t row = offset_m + m;
            set_c_pair(row, n, h2_add(c_pair(row, n), block01[m]));
            set_c_pair(row, n + 2, h2_add(c_pair(row, n + 2), block23[m]));
          }
        }
      }
    }
  }
  return c;
}

double max_abs_error(const HalfMatrix& c, const std::vector<float>& reference) {
  double worst = 0.0;
  for (std::size_t i = 0; i < c.data().size(); ++i) {
    const double diff = std::abs(static_cast<double>(f16_to_f32(c.data()[i])) -
                                 static_cast<double>(reference[i]));
    worst = std::max(worst, diff);
  }
  return worst;
}

}  // namespace qgemm::kernels
