#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <vector>

#include "bki/nodes.hpp"

namespace bki {

/// Epoch-based grace periods for RCU reclamation, single writer. Retired
/// nodes are filed under the writer's current epoch; the epoch advances only
/// when every active reader is pinned at it, and the bucket two epochs back
/// is freed at that point. A reader that pins epoch e has synchronized with
/// the store of e and therefore observes every unlink retired before it.
class EpochManager {
 public:
  static constexpr std::size_t kMaxReaders = 64;
  static constexpr std::uint64_t kIdle = ~0ull;

  EpochManager() = default;
  ~EpochManager() { reclaim_all(); }

  EpochManager(const EpochManager&) = delete;
  EpochManager& operator=(const EpochManager&) = delete;

  /// Claims a reader slot and pins the current epoch. The confirm loop
  /// guarantees the pinned value was the global epoch at some point after the
  /// pin became visible.
  std::size_t reader_enter() {
    for (std::size_t i = 0;; i = (i + 1) % kMaxReaders) {
      std::uint64_t idle = kIdle;
      std::uint64_t e = global_.load(std::memory_order_seq_cst);
      if (slots_[i].pinned.compare_exchange_strong(idle, e, std::memory_order_seq_cst)) {
        for (;;) {
          const std::uint64_t cur = global_.load(std::memory_order_seq_cst);
          if (cur == e) return i;
          slots_[i].pinned.store(cur, std::memory_order_seq_cst);
          e = cur;
        }
      }
    }
  }

  void reader_exit(std::size_t slot) {
    slots_[slot].pinned.store(kIdle, std::memory_order_release);
  }

  /// Writer-only: files the node for deferred deletion and opportunistically
  /// advances the epoch.
  void retire(Node* n) {
    retired_[global_.load(std::memory_order_relaxed) % 3].push_back(n);
    ++total_retired_;
    if (++since_advance_ >= kAdvanceInterval) {
      since_advance_ = 0;
      try_advance();
    }
  }

  /// Writer-only. Succeeds iff every reader is idle or pinned at the current
  /// epoch; frees the bucket from two epochs ago before publishing the new
  /// epoch.
  bool try_advance() {
    const std::uint64_t e = global_.load(std::memory_order_relaxed);
    for (auto& s : slots_) {
      const std::uint64_t p = s.pinned.load(std::memory_order_seq_cst);
      if (p != kIdle && p != e) return false;
    }
    auto& old_bucket = retired_[(e + 1) % 3];  // epoch e - 2
    for (Node* n : old_bucket) delete n;
    total_reclaimed_ += old_bucket.size();
    old_bucket.clear();
    global_.store(e + 1, std::memory_order_seq_cst);
    return true;
  }

  /// Frees everything immediately; caller guarantees no readers exist.
  void reclaim_all() {
    for (auto& bucket : retired_) {
      for (Node* n : bucket) delete n;
      total_reclaimed_ += bucket.size();
      bucket.clear();
    }
  }

  std::uint64_t epoch() const { return global_.load(std::memory_order_relaxed); }
  std::size_t pending() const {
    return retired_[0].size() + retired_[1].size() + retired_[2].size();
  }
  std::uint64_t total_retired() const { return total_retired_; }
  std::uint64_t total_reclaimed() const { return total_reclaimed_; }

 private:
  static constexpr std::uint64_t kAdvanceInterval = 64;

  struct alignas(64) ReaderSlot {
    std::atomic<std::uint64_t> pinned{kIdle};
  };

  std::atomic<std::uint64_t> global_{2};  // start above 0 so e-2 indexing is safe
  std::array<ReaderSlot, kMaxReaders> slots_;
  std::vector<Node*> retired_[3];  // writer-only
  std::uint64_t since_advance_ = 0;
  std::uint64_t total_retired_ = 0;
  std::uint64_t total_reclaimed_ = 0;
};

/// RAII reader guard: nodes reachable while the guard lives stay allocated.
class EpochGuard {
 public:
  explicit EpochGuard(EpochManager& m) : mgr_(m), slot_(m.reader_enter()) {}
  ~EpochGuard() { mgr_.reader_exit(slot_); }
  EpochGuard(const EpochGuard&) = delete;
  EpochGuard& operator=(const EpochGuard&) = delete;

 private:
  EpochManager& mgr_;
  std::size_t slot_;
};

}  // namespace bki
