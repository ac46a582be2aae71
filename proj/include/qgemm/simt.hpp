#pragma once

// Deterministic SIMT execution harness: thread blocks, per-block shared
// memory, barrier synchronization, global memory with half2 atomic adds,
// and hardware-style counters.
//
// Schedule contract: blocks run sequentially in ascending block id; within
// a block, execution proceeds in barrier-delimited phases; within each
// phase, threads run to completion (up to the next barrier or kernel end)
// in ascending thread id. Counters and final global memory are a pure
// function of (kernel, config, initial globals).
//
// Kernels are C++20 coroutines: a kernel body is an ordinary function over
// a ThreadContext that returns ThreadProgram and suspends at barriers via
// `co_await tc.barrier()`.

#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qgemm/errors.hpp"
#include "qgemm/half.hpp"

namespace qgemm::sim {

// Reads of never-written shared memory return this pattern (a signaling
// NaN bit pattern) and are reported in LaunchStats.
inline constexpr std::uint16_t kSharedPoison = 0x7FFF;

struct CounterSet {
  std::uint64_t global_load_16 = 0;  // 16-bit global load transactions
  std::uint64_t global_load_32 = 0;  // 32-bit (Half2) global load transactions
  std::uint64_t global_atomic = 0;   // global atomic adds (one per Half2)
  std::uint64_t shared_read = 0;     // shared-memory element reads
  std::uint64_t shared_write = 0;    // shared-memory element writes
  std::uint64_t valu_packed = 0;     // packed half2 ALU instruction units
  std::uint64_t valu_scalar = 0;     // scalar half ALU instruction units
  std::uint64_t barriers = 0;        // barriers passed, once per block each

  friend bool operator==(const CounterSet&, const CounterSet&) = default;
};

struct LaunchConfig {
  std::uint32_t num_blocks = 1;
  std::uint32_t threads_per_block = 1;
  std::uint32_t shared_bytes = 0;
};

struct LaunchStats {
  CounterSet counters;
  std::uint64_t uninit_shared_reads = 0;  // diagnostic, not a counter
};

struct BufferId {
  std::uint32_t index = 0;
};

class ThreadContext;

// Owning handle for one simulated thread's coroutine frame.
class ThreadProgram {
 public:
  struct promise_type {
    std::exception_ptr error;
    bool at_barrier = false;

    ThreadProgram get_return_object() {
      return ThreadProgram(Handle::from_promise(*this));
    }
    std::suspend_always initial_suspend() noexcept { return {}; }
    std::suspend_always final_suspend() noexcept { return {}; }
    void return_void() noexcept {}
    void unhandled_exception() noexcept { error = std::current_exception(); }
  };
  using Handle = std::coroutine_handle<promise_type>;

  ThreadProgram() = default;
  explicit ThreadProgram(Handle h) : handle_(h) {}
  ThreadProgram(ThreadProgram&& other) noexcept
      : handle_(std::exchange(other.handle_, {})) {}
  ThreadProgram& operator=(ThreadProgram&& other) noexcept {
    if (this != &other) {
      if (handle_) handle_.destroy();
      handle_ = std::exchange(other.handle_, {});
    }
    return *this;
  }
  ThreadProgram(const ThreadProgram&) = delete;
  ThreadProgram& operator=(const ThreadProgram&) = delete;
  ~ThreadProgram() {
    if (handle_) handle_.destroy();
  }

  Handle handle() const { return handle_; }

 private:
  Handle handle_;
};

// Awaitable returned by ThreadContext::barrier().
struct BarrierPoint {
  bool await_ready() const noexcept { return false; }
  void await_suspend(
      std::coroutine_handle<ThreadProgram::promise_type> h) const noexcept {
    h.promise().at_barrier = true;
  }
  void await_resume() const noexcept {}
};

// How an h2 arithmetic op is issued: one packed instruction (the inline
// assembly path) or lowered to two scalar f16 instructions.
enum class Issue { packed, lowered };

using KernelFn = std::function<ThreadProgram(ThreadContext&)>;

namespace detail {

struct GlobalBuffer {
  std::string name;
  std::vector<Half> data;
};

struct LaunchState {
  std::vector<GlobalBuffer>* globals = nullptr;
  CounterSet counters;
  std::uint64_t uninit_reads = 0;
  std::vector<Half> shared;
  std::vector<bool> shared_written;
  std::uint32_t block = 0;
  std::uint32_t num_blocks = 0;
  std::uint32_t threads = 0;
};

}  // namespace detail

class DeviceContext {
 public:
  explicit DeviceContext(std::uint32_t shared_cap_bytes = 64 * 1024)
      : shared_cap_bytes_(shared_cap_bytes) {}

  BufferId alloc_global(std::string name, std::size_t elem_count) {
    globals_.push_back({std::move(name), std::vector<Half>(elem_count)});
    return BufferId{static_cast<std::uint32_t>(globals_.size() - 1)};
  }

  BufferId alloc_global(std::string name, std::vector<Half> contents) {
    globals_.push_back({std::move(name), std::move(contents)});
    return BufferId{static_cast<std::uint32_t>(globals_.size() - 1)};
  }

  std::vector<Half>& global(BufferId id) { return buffer(id).data; }
  const std::vector<Half>& global(BufferId id) const {
    return const_cast<DeviceContext*>(this)->buffer(id).data;
  }

  std::uint32_t shared_cap_bytes() const { return shared_cap_bytes_; }

  // Runs the kernel under the deterministic schedule and returns the
  // accumulated counters.
  LaunchStats launch(const LaunchConfig& cfg, const KernelFn& kernel);

 private:
  friend class ThreadContext;

  detail::GlobalBuffer& buffer(BufferId id) {
    if (id.index >= globals_.size())
      throw OutOfBounds("unknown global buffer id");
    return globals_[id.index];
  }

  std::uint32_t shared_cap_bytes_;
  std::vector<detail::GlobalBuffer> globals_;
};

// Per-thread view handed to kernel bodies: thread/block ids, the counted
// memory operations, the barrier, and the instruction-accounting hooks.
class ThreadContext {
 public:
  ThreadContext(detail::LaunchState* state, std::uint32_t thread_id)
      : state_(state), tid_(thread_id) {}

  std::uint32_t thread_id() const { return tid_; }
  std::uint32_t block_id() const { return state_->block; }
  std::uint32_t thread_count() const { return state_->threads; }
  std::uint32_t block_count() const { return state_->num_blocks; }

  BarrierPoint barrier() const { return {}; }

  Half global_load_half(BufferId id, std::size_t idx) {
    auto& buf = buffer(id);
    check_bounds(buf, idx, 1);
    state_->counters.global_load_16 += 1;
    return buf.data[idx];
  }

  Half2 global_load_half2(BufferId id, std::size_t idx) {
    auto& buf = buffer(id);
    check_even(buf, idx);
    check_bounds(buf, idx, 2);
    state_->counters.global_load_32 += 1;
    return Half2{buf.data[idx], buf.data[idx + 1]};
  }

  // Lanewise h_add of v into memory; one atomic regardless of lane count.
  void global_atomic_add_half2(BufferId id, std::size_t idx, Half2 v) {
    auto& buf = buffer(id);
    check_even(buf, idx);
    check_bounds(buf, idx, 2);
    buf.data[idx] = h_add(buf.data[idx], v.lo);
    buf.data[idx + 1] = h_add(buf.data[idx + 1], v.hi);
    state_->counters.global_atomic += 1;
  }

  Half shared_read(std::size_t idx) {
    check_shared(idx, 1);
    state_->counters.shared_read += 1;
    return read_shared_slot(idx);
  }

  void shared_write(std::size_t idx, Half v) {
    check_shared(idx, 1);
    state_->counters.shared_write += 1;
    state_->shared[idx] = v;
    state_->shared_written[idx] = true;
  }

  Half2 shared_read2(std::size_t idx) {
    if (idx % 2 != 0)
      throw Misaligned("shared half2 read at odd element offset");
    check_shared(idx, 2);
    state_->counters.shared_read += 2;
    return Half2{read_shared_slot(idx), read_shared_slot(idx + 1)};
  }

  void shared_write2(std::size_t idx, Half2 v) {
    if (idx % 2 != 0)
      throw Misaligned("shared half2 write at odd element offset");
    check_shared(idx, 2);
    state_->counters.shared_write += 2;
    state_->shared[idx] = v.lo;
    state_->shared[idx + 1] = v.hi;
    state_->shared_written[idx] = true;
    state_->shared_written[idx + 1] = true;
  }

  // Instruction-accounting hooks. Both issue modes perform identical
  // lanewise arithmetic; they differ only in which counter they charge:
  // packed charges 1 valu_packed, lowered charges 2 valu_scalar.
  Half2 fma2(Half2 a, Half2 b, Half2 c, Issue issue) {
    charge(issue);
    return h2_fma(a, b, c);
  }

  Half2 add2(Half2 a, Half2 b, Issue issue) {
    charge(issue);
    return h2_add(a, b);
  }

 private:
  detail::GlobalBuffer& buffer(BufferId id) {
    if (id.index >= state_->globals->size())
      throw OutOfBounds("unknown global buffer id");
    return (*state_->globals)[id.index];
  }

  void check_bounds(const detail::GlobalBuffer& buf, std::size_t idx,
                    std::size_t count) const {
    if (idx + count > buf.data.size())
      throw OutOfBounds("global access past end of '" + buf.name + "'");
  }

  void check_even(const detail::GlobalBuffer& buf, std::size_t idx) const {
    if (idx % 2 != 0)
      throw Misaligned("half2 access at odd offset in '" + buf.name + "'");
  }

  void check_shared(std::size_t idx, std::size_t count) const {
    if (idx + count > state_->shared.size())
      throw OutOfBounds("shared access past end of block shared memory");
  }

  Half read_shared_slot(std::size_t idx) {
    if (!state_->shared_written[idx]) {
      state_->uninit_reads += 1;
      return Half::from_bits(kSharedPoison);
    }
    return state_->shared[idx];
  }

  void charge(Issue issue) {
    if (issue == Issue::packed)
      state_->counters.valu_packed += 1;
    else
      state_->counters.valu_scalar += 2;
  }

  detail::LaunchState* state_;
  std::uint32_t tid_;
};

}  // namespace qgemm::sim
