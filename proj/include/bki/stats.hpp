#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <vector>

namespace bki {

namespace detail {

/// Cheap monotonic tick source for scope attribution. A TSC read costs a few
/// nanoseconds where a clock_gettime call costs tens; per-op timers would
/// otherwise dominate sub-100ns operations. Invariant-TSC hardware assumed on
/// x86-64; other targets fall back to the steady clock.
inline std::uint64_t now_ticks() {
#if defined(__x86_64__)
  return __builtin_ia32_rdtsc();
#else
  return static_cast<std::uint64_t>(
      std::chrono::steady_clock::now().time_since_epoch().count());
#endif
}

/// Ticks per second, calibrated once against the steady clock.
inline double ticks_per_second() {
  static const double rate = [] {
#if defined(__x86_64__)
    const auto w0 = std::chrono::steady_clock::now();
    const std::uint64_t t0 = now_ticks();
    while (std::chrono::steady_clock::now() - w0 < std::chrono::milliseconds(20)) {
    }
    const std::uint64_t t1 = now_ticks();
    const auto w1 = std::chrono::steady_clock::now();
    return static_cast<double>(t1 - t0) /
           std::chrono::duration<double>(w1 - w0).count();
#else
    return 1e9;
#endif
  }();
  return rate;
}

inline double ticks_to_seconds(std::uint64_t ticks) {
  return static_cast<double>(ticks) / ticks_per_second();
}

}  // namespace detail

/// Structure-modification counters. `shifts_performed` exists to witness the
/// design's central property: it is incremented nowhere and must stay 0.
struct SmoStats {
  std::atomic<std::uint64_t> dbucket_splits{0};
  std::atomic<std::uint64_t> resegments{0};
  std::atomic<std::uint64_t> merges{0};
  std::atomic<std::uint64_t> shifts_performed{0};
  std::atomic<std::uint64_t> leaf_entries_loaded{0};  // bulk-load single-pass witness

  void reset() {
    dbucket_splits = 0;
    resegments = 0;
    merges = 0;
    shifts_performed = 0;
    leaf_entries_loaded = 0;
  }
};

/// Scope-attributed wall time and probe-distance counters. Enabled via
/// IndexConfig::collect_breakdown; everything is relaxed atomics so readers
/// can contribute.
struct Instrumentation {
  static constexpr std::size_t kProbeBuckets = 17;  // 1..16 probes, then overflow

  std::atomic<std::uint64_t> segment_lookup_ticks{0};
  std::atomic<std::uint64_t> dbucket_lookup_ticks{0};
  std::atomic<std::uint64_t> insert_ticks{0};    // insert body excluding allocation/SMO
  std::atomic<std::uint64_t> mem_mgmt_ticks{0};  // allocation + SMO + reclamation
  std::atomic<std::uint64_t> lookups{0};
  std::atomic<std::uint64_t> inserts{0};
  std::array<std::atomic<std::uint64_t>, kProbeBuckets> probe_hist{};

  void record_probes(std::uint32_t probes) {
    const std::size_t b = probes >= kProbeBuckets ? kProbeBuckets - 1 : probes;
    probe_hist[b].fetch_add(1, std::memory_order_relaxed);
  }

  void reset() {
    segment_lookup_ticks = 0;
    dbucket_lookup_ticks = 0;
    insert_ticks = 0;
    mem_mgmt_ticks = 0;
    lookups = 0;
    inserts = 0;
    for (auto& p : probe_hist) p.store(0, std::memory_order_relaxed);
  }
};

class ScopedTimer {
 public:
  ScopedTimer(std::atomic<std::uint64_t>& sink, bool enabled)
      : sink_(sink), enabled_(enabled) {
    if (enabled_) start_ = detail::now_ticks();
  }
  ~ScopedTimer() { stop(); }
  void stop() {
    if (!enabled_) return;
    enabled_ = false;
    sink_.fetch_add(detail::now_ticks() - start_, std::memory_order_relaxed);
  }

 private:
  std::atomic<std::uint64_t>& sink_;
  bool enabled_;
  std::uint64_t start_ = 0;
};

}  // namespace bki
