#include "qgemm/simt.hpp"

#include <algorithm>

namespace qgemm::sim {

LaunchStats DeviceContext::launch(const LaunchConfig& cfg,
                                  const KernelFn& kernel) {
  if (cfg.num_blocks == 0 || cfg.threads_per_block == 0)
    throw Error("launch requires at least one block and one thread");
  if (cfg.shared_bytes > shared_cap_bytes_)
    throw SharedOverflow("requested " + std::to_string(cfg.shared_bytes) +
                         " shared bytes, cap is " +
                         std::to_string(shared_cap_bytes_));

  detail::LaunchState state;
  state.globals = &globals_;
  state.num_blocks = cfg.num_blocks;
  state.threads = cfg.threads_per_block;
  state.shared.resize(cfg.shared_bytes / 2);
  state.shared_written.resize(state.shared.size());

  const std::uint32_t threads = cfg.threads_per_block;

  for (std::uint32_t block = 0; block < cfg.num_blocks; ++block) {
    state.block = block;
    // Shared memory starts each block unwritten; the harness does not
    // pre-zero it, so a read before any write yields the poison pattern.
    std::fill(state.shared_written.begin(), state.shared_written.end(), false);

    std::vector<ThreadContext> contexts;
    contexts.reserve(threads);
    for (std::uint32_t t = 0; t < threads; ++t)
      contexts.emplace_back(&state, t);

    std::vector<ThreadProgram> programs;
    programs.reserve(threads);
    for (std::uint32_t t = 0; t < threads; ++t)
      programs.push_back(kernel(contexts[t]));

    // Barrier-delimited phases; threads run to completion within a phase
    // in ascending thread id.
    while (true) {
      std::uint32_t done = 0;
      for (auto& program : programs) {
        const auto handle = program.handle();
        handle.resume();
        if (handle.promise().error)
          std::rethrow_exception(handle.promise().error);
        if (handle.done()) ++done;
      }
      if (done == threads) break;
      if (done != 0)
        throw BarrierDivergence(
            std::to_string(done) + " of " + std::to_string(threads) +
            " threads ended while the rest wait at a barrier (block " +
            std::to_string(block) + ")");
      // All threads suspended at the barrier: one barrier per block.
      state.counters.barriers += 1;
      for (auto& program : programs)
        program.handle().promise().at_barrier = false;
    }
  }

  return LaunchStats{state.counters, state.uninit_reads};
}

}  // namespace qgemm::sim
