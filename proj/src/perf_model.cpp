#include "qgemm/perf_model.hpp"

#include <algorithm>

#include "qgemm/errors.hpp"

namespace qgemm::perf {

namespace {

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) {
  return (a + b - 1) / b;
}

}  // namespace

CounterPrediction predict(const ProblemDims& dims,
                          const kernels::TileParams& tile,
                          kernels::VariantFlags flags, bool perm_present) {
  if (dims.m == 0 || dims.k == 0 || dims.n == 0)
    throw ShapeError("dimensions must be positive");
  if (dims.n % 4 != 0) throw ShapeError("n must be a multiple of 4");
  if (tile.threads == 0 || tile.bk == 0 || tile.m_count == 0 ||
      tile.bk % tile.threads != 0)
    throw ShapeError("invalid tile");
  const std::uint64_t e = tile.elems_per_thread();
  if (flags.vml && e % 2 != 0)
    throw ShapeError("vml requires an even per-thread element count");

  const std::uint64_t m_blocks = ceil_div(dims.m, tile.m_count);
  const std::uint64_t n_blocks = dims.n / 4;
  const std::uint64_t k_blocks = ceil_div(dims.k, tile.bk);

  CounterPrediction p;
  // Per-block counts depend on the (mb, kb) tail geometry only; every
  // column block contributes identically.
  for (std::uint64_t mb = 0; mb < m_blocks; ++mb) {
    const std::uint64_t mr =
        std::min<std::uint64_t>(tile.m_count, dims.m - mb * tile.m_count);
    for (std::uint64_t kb = 0; kb < k_blocks; ++kb) {
      const std::uint64_t bk =
          std::min<std::uint64_t>(tile.bk, dims.k - kb * tile.bk);
      // Threads holding at least one in-range element.
      const std::uint64_t t_active = ceil_div(bk, e);

      // A-tile loads: the vectorized path halves transactions; a
      // permutation forces the scalar path.
      if (flags.vml && !perm_present) {
        p.global_load_32 += n_blocks * (bk / 2) * mr;
        p.global_load_16 += n_blocks * (bk % 2) * mr;
      } else {
        p.global_load_16 += n_blocks * bk * mr;
      }

      // Store stage: 2 half2 atomics per row, from every active thread in
      // the baseline or from thread 0 alone under smb.
      p.global_atomic +=
          n_blocks * (flags.smb ? 2 * mr : 2 * t_active * mr);

      // MAC issues 2 h2 fmas per (row, in-range element); smb adds 2 h2
      // adds per (active thread, row). Packed issue charges 1 unit per op,
      // lowered charges 2.
      const std::uint64_t h2_ops =
          2 * bk * mr + (flags.smb ? 2 * t_active * mr : 0);
      if (flags.ila)
        p.valu_packed += n_blocks * h2_ops;
      else
        p.valu_scalar += n_blocks * 2 * h2_ops;

      // Every block_a slot is written once (loaded or zero-filled); the MAC
      // reads each in-range slot once. The smb store stage reads and writes
      // 4 accumulator elements per (active thread, row), plus thread 0's
      // 4-element init write and 4-element final read per row.
      p.shared_write += n_blocks * (std::uint64_t{tile.bk} * mr +
                                    (flags.smb ? 4 * mr + 4 * t_active * mr : 0));
      p.shared_read += n_blocks * (bk * mr +
                                   (flags.smb ? 4 * t_active * mr + 4 * mr : 0));

      p.barriers += n_blocks * (flags.smb ? 2 : 1);
    }
  }
  return p;
}

CompareReport compare(const sim::CounterSet& measured,
                      const CounterPrediction& predicted) {
  CompareReport report;
  const auto row = [&](std::string_view name, std::uint64_t got,
                       std::uint64_t want) {
    report.rows.push_back(CounterRow{name, got, want, got == want});
  };
  row("global_atomic", measured.global_atomic, predicted.global_atomic);
  row("global_load_16", measured.global_load_16, predicted.global_load_16);
  row("global_load_32", measured.global_load_32, predicted.global_load_32);
  row("valu_scalar", measured.valu_scalar, predicted.valu_scalar);
  row("valu_packed", measured.valu_packed, predicted.valu_packed);
  row("shared_read", measured.shared_read, predicted.shared_read);
  row("shared_write", measured.shared_write, predicted.shared_write);
  row("barriers", measured.barriers, predicted.barriers);
  report.all_match = std::all_of(report.rows.begin(), report.rows.end(),
                                 [](const CounterRow& r) { return r.equal; });
  return report;
}

double cost_proxy(const sim::CounterSet& c, const CostWeights& w) {
  return w.atomic * static_cast<double>(c.global_atomic) +
         w.load16 * static_cast<double>(c.global_load_16) +
         w.load32 * static_cast<double>(c.global_load_32) +
         w.valu_scalar * static_cast<double>(c.valu_scalar) +
         w.valu_packed * static_cast<double>(c.valu_packed) +
         w.shared * static_cast<double>(c.shared_read + c.shared_write);
}

double reduction_pct(double base, double opt) {
  if (base == 0.0) return 0.0;
  return 100.0 * (1.0 - opt / base);
}

}  // namespace qgemm::perf
