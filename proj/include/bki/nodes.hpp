#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cassert>
#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "bki/config.hpp"
#include "bki/hints.hpp"
#include "bki/segmentation.hpp"

namespace bki {

enum class NodeKind : std::uint8_t { DBucket, Segment };

/// Base of every tree node. `pivot` is the minimum key covered by the node;
/// it only ever decreases, and such updates are applied after the entry that
/// caused them is visible.
struct Node {
  const NodeKind kind;
  const std::uint16_t level;  // 0 = D-Bucket, 1 = leaf-parent segment, ...
  std::atomic<Key> pivot;

  Node(NodeKind k, std::uint16_t lvl, Key p) : kind(k), level(lvl), pivot(p) {}
  virtual ~Node() = default;

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
};

enum class InsertOutcome : std::uint8_t { Placed, Overwrote, BucketFull };

/// Leaf container of unsorted key-value slots with per-slot valid bits.
/// Entries are published by writing the slot, then setting the valid bit with
/// release ordering; slots are never emptied, so a probe chain from a key's
/// hint slot to its resting slot can contain no gaps.
class DBucket final : public Node {
 public:
  const std::uint32_t capacity;
  const Key hint_lo;  // endpoint-hint params, frozen at creation
  const Key hint_hi;

  DBucket(std::uint32_t cap, Key piv, Key lo, Key hi)
      : Node(NodeKind::DBucket, 0, piv),
        capacity(cap),
        hint_lo(lo),
        hint_hi(hi),
        slots_(new Slot[cap]),
        valid_(new std::atomic<std::uint64_t>[words(cap)]) {
    for (std::size_t w = 0; w < words(cap); ++w) valid_[w].store(0, std::memory_order_relaxed);
  }

  std::uint32_t count() const { return count_; }  // writer-only
  bool full() const { return count_ == capacity; }

  bool is_valid(std::uint32_t slot) const {
    return (valid_[slot >> 6].load(std::memory_order_acquire) >> (slot & 63)) & 1u;
  }

  Key key_at(std::uint32_t slot) const {
    return slots_[slot].key.load(std::memory_order_relaxed);
  }
  Value value_at(std::uint32_t slot) const {
    return slots_[slot].value.load(std::memory_order_relaxed);
  }

  /// Writer-only. Finds the first empty slot at/after hint(k) (cyclic) and
  /// publishes the entry there; an existing key is overwritten in place, even
  /// when the bucket is full. The pivot is lowered last.
  InsertOutcome h_insert(Key k, Value v, const HintFn& hint, std::uint32_t* out_slot = nullptr) {
    const std::uint32_t start = hint(k, capacity);
    std::uint32_t slot = start;
    for (std::uint32_t probes = 0; probes < capacity; ++probes) {
      if (!is_valid(slot)) {
        if (full()) break;  // no key match possible past this point either
        slots_[slot].key.store(k, std::memory_order_relaxed);
        slots_[slot].value.store(v, std::memory_order_relaxed);
        valid_[slot >> 6].fetch_or(1ull << (slot & 63), std::memory_order_release);
        ++count_;
        if (k < pivot.load(std::memory_order_relaxed))
          pivot.store(k, std::memory_order_release);
        if (out_slot) *out_slot = slot;
        return InsertOutcome::Placed;
      }
      if (key_at(slot) == k) {
        slots_[slot].value.store(v, std::memory_order_release);
        if (out_slot) *out_slot = slot;
        return InsertOutcome::Overwrote;
      }
      slot = slot + 1 == capacity ? 0 : slot + 1;
    }
    return InsertOutcome::BucketFull;
  }

  /// Reader-safe probe from hint(k). With early_stop the probe ends at the
  /// first empty slot, otherwise after `capacity` probes.
  std::optional<Value> h_lookup(Key k, const HintFn& hint, bool early_stop,
                                std::uint32_t* probe_count = nullptr) const {
    const std::uint32_t start = hint(k, capacity);
    std::uint32_t slot = start;
    for (std::uint32_t probes = 1; probes <= capacity; ++probes) {
      if (!is_valid(slot)) {
        if (early_stop) {
          if (probe_count) *probe_count = probes;
          return std::nullopt;
        }
      } else if (key_at(slot) == k) {
        if (probe_count) *probe_count = probes;
        return value_at(slot);
      }
      slot = slot + 1 == capacity ? 0 : slot + 1;
    }
    if (probe_count) *probe_count = capacity;
    return std::nullopt;
  }

  /// Reader-safe snapshot of valid entries with key >= min_key. Returns the
  /// number of slots visited.
  std::uint32_t collect(Key min_key, std::vector<std::pair<Key, Value>>& out) const {
    for (std::uint32_t slot = 0; slot < capacity; ++slot) {
      if (!is_valid(slot)) continue;
      const Key k = key_at(slot);
      if (k >= min_key) out.emplace_back(k, value_at(slot));
    }
    return capacity;
  }

  /// Writer-only minimum over valid keys; bucket must be non-empty.
  Key min_key() const {
    bool seen = false;
    Key best = 0;
    for (std::uint32_t slot = 0; slot < capacity; ++slot) {
      if (!is_valid(slot)) continue;
      const Key k = key_at(slot);
      if (!seen || k < best) best = k, seen = true;
    }
    assert(seen);
    return best;
  }

  /// Test hook: hides the slot currently holding `k`. Violates the no-empty-
  /// chain invariant on purpose (fault injection).
  bool hide_slot_of(Key k) {
    for (std::uint32_t slot = 0; slot < capacity; ++slot) {
      if (is_valid(slot) && key_at(slot) == k) {
        valid_[slot >> 6].fetch_and(~(1ull << (slot & 63)), std::memory_order_release);
        --count_;
        return true;
      }
    }
    return false;
  }

  std::size_t memory_bytes() const {
    return sizeof(DBucket) + capacity * sizeof(Slot) +
           words(capacity) * sizeof(std::atomic<std::uint64_t>);
  }

 private:
  struct Slot {
    std::atomic<Key> key{0};
    std::atomic<Value> value{0};
  };
  static std::size_t words(std::uint32_t cap) { return (cap + 63) / 64; }

  std::unique_ptr<Slot[]> slots_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> valid_;
  std::uint32_t count_ = 0;  // writer-only
};

/// Fixed-capacity container of unsorted (pivot, child) routing entries.
/// Capacity is at most 64 so one word of valid bits covers it.
class SBucket {
 public:
  std::atomic<Key> pivot{0};

  void init(std::uint32_t cap) {
    capacity_ = cap;
    entries_.reset(new RoutingEntry[cap]);
  }

  std::uint32_t capacity() const { return capacity_; }
  std::uint32_t count() const { return count_; }  // writer-only
  std::uint32_t free_slots() const { return capacity_ - std::popcount(valid_mask()); }

  std::uint64_t valid_mask() const { return valid_.load(std::memory_order_acquire); }

  Key entry_pivot(std::uint32_t i) const {
    return entries_[i].pivot.load(std::memory_order_acquire);
  }
  Node* entry_child(std::uint32_t i) const {
    return entries_[i].child.load(std::memory_order_acquire);
  }

  /// Writer-only. Publishes (pivot, child) into the first free slot; the
  /// valid bit is set last. Returns the slot, or capacity() when full.
  std::uint32_t publish_entry(Key p, Node* child) {
    const std::uint64_t mask = valid_.load(std::memory_order_relaxed);
    if (std::popcount(mask) >= static_cast<int>(capacity_)) return capacity_;
    const auto slot = static_cast<std::uint32_t>(std::countr_one(mask));
    entries_[slot].pivot.store(p, std::memory_order_release);
    entries_[slot].child.store(child, std::memory_order_release);
    valid_.fetch_or(1ull << slot, std::memory_order_release);
    version_.fetch_add(1, std::memory_order_release);
    ++count_;
    return slot;
  }

  /// Writer-only. Clears the valid bit of slot i (the last step of RCU).
  void invalidate_entry(std::uint32_t i) {
    valid_.fetch_and(~(1ull << i), std::memory_order_release);
    version_.fetch_add(1, std::memory_order_release);
    --count_;
  }

  /// Reader-safe consistent view of the valid (pivot, child) entries. A slot
  /// freed by invalidate_entry can be reused by a later publish_entry while a
  /// reader still holds the older valid mask, so raw entry reads can observe
  /// a half-written replacement; the version check detects any publish or
  /// invalidate that raced the reads and retries.
  std::uint32_t snapshot(std::array<std::pair<Key, Node*>, 64>& out) const {
    for (;;) {
      const std::uint64_t v = version_.load(std::memory_order_acquire);
      std::uint64_t mask = valid_.load(std::memory_order_acquire);
      std::uint32_t n = 0;
      while (mask) {
        const auto i = static_cast<std::uint32_t>(std::countr_zero(mask));
        mask &= mask - 1;
        out[n++] = {entry_pivot(i), entry_child(i)};
      }
      if (version_.load(std::memory_order_acquire) == v) return n;
    }
  }

  void lower_entry_pivot(std::uint32_t i, Key p) {
    entries_[i].pivot.store(p, std::memory_order_release);
  }

  /// Reader-safe: among valid entries, the child with the largest pivot <= k,
  /// falling back to the minimum-pivot entry when none qualifies.
  Node* route(Key k) const {
    std::array<std::pair<Key, Node*>, 64> es;
    const std::uint32_t n = snapshot(es);
    Node* best = nullptr;
    Key best_pivot = 0;
    Node* leftmost = nullptr;
    Key leftmost_pivot = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto [p, c] = es[i];
      if (!leftmost || p < leftmost_pivot) leftmost = c, leftmost_pivot = p;
      if (p <= k && (!best || p > best_pivot)) best = c, best_pivot = p;
    }
    return best ? best : leftmost;
  }

  /// Writer-only variant that also reports the slot taken.
  std::uint32_t route_slot(Key k) const {
    std::uint64_t mask = valid_mask();
    std::uint32_t best = capacity_, leftmost = capacity_;
    Key best_pivot = 0, leftmost_pivot = 0;
    while (mask) {
      const auto i = static_cast<std::uint32_t>(std::countr_zero(mask));
      mask &= mask - 1;
      const Key p = entry_pivot(i);
      if (leftmost == capacity_ || p < leftmost_pivot) leftmost = i, leftmost_pivot = p;
      if (p <= k && (best == capacity_ || p > best_pivot)) best = i, best_pivot = p;
    }
    return best != capacity_ ? best : leftmost;
  }

  std::size_t memory_bytes() const {
    return sizeof(SBucket) + capacity_ * sizeof(RoutingEntry);
  }

 private:
  struct RoutingEntry {
    std::atomic<Key> pivot{0};
    std::atomic<Node*> child{nullptr};
  };
  std::unique_ptr<RoutingEntry[]> entries_;
  std::atomic<std::uint64_t> valid_{0};
  std::atomic<std::uint64_t> version_{0};
  std::uint32_t capacity_ = 0;
  std::uint32_t count_ = 0;  // writer-only
};

/// Inner node: a linear model over an ordered run of S-Buckets. The model and
/// the S-Bucket array are immutable after construction; only entry-level state
/// inside S-Buckets changes.
class Segment final : public Node {
 public:
  Segment(std::uint16_t lvl, Key piv, LinearModel m, std::uint32_t n_sbuckets,
          std::uint32_t sbucket_cap, std::uint32_t smo)
      : Node(NodeKind::Segment, lvl, piv),
        model(m),
        n_sbuckets_(n_sbuckets),
        sbuckets_(new SBucket[n_sbuckets]),
        smo_count_(smo) {
    for (std::uint32_t i = 0; i < n_sbuckets; ++i) sbuckets_[i].init(sbucket_cap);
  }

  const LinearModel model;

  std::uint32_t n_sbuckets() const { return n_sbuckets_; }
  SBucket& sbucket(std::uint32_t i) { return sbuckets_[i]; }
  const SBucket& sbucket(std::uint32_t i) const { return sbuckets_[i]; }

  std::uint32_t smo_count() const { return smo_count_; }  // writer-only

  /// Model prediction corrected by neighbor steps on S-Bucket pivots.
  std::uint32_t route_sbucket(Key k) const {
    std::uint32_t j =
        static_cast<std::uint32_t>(model_predict_bucket(model, k, n_sbuckets_));
    while (j > 0 && k < sbuckets_[j].pivot.load(std::memory_order_relaxed)) --j;
    while (j + 1 < n_sbuckets_ &&
           k >= sbuckets_[j + 1].pivot.load(std::memory_order_relaxed))
      ++j;
    return j;
  }

  Node* route(Key k) const { return sbuckets_[route_sbucket(k)].route(k); }

  /// Writer-only: all valid (pivot, child) entries in pivot order. Each
  /// S-Bucket's unsorted entries are sorted, then the runs concatenate.
  std::vector<std::pair<Key, Node*>> collect_entries_sorted() const {
    std::vector<std::pair<Key, Node*>> out;
    std::vector<std::pair<Key, Node*>> scratch;
    for (std::uint32_t b = 0; b < n_sbuckets_; ++b) {
      scratch.clear();
      const SBucket& sb = sbuckets_[b];
      std::uint64_t mask = sb.valid_mask();
      while (mask) {
        const auto i = static_cast<std::uint32_t>(std::countr_zero(mask));
        mask &= mask - 1;
        scratch.emplace_back(sb.entry_pivot(i), sb.entry_child(i));
      }
      std::sort(scratch.begin(), scratch.end());
      out.insert(out.end(), scratch.begin(), scratch.end());
    }
    return out;
  }

  std::size_t memory_bytes() const {
    std::size_t b = sizeof(Segment);
    for (std::uint32_t i = 0; i < n_sbuckets_; ++i) b += sbuckets_[i].memory_bytes();
    return b;
  }

  friend class BucketIndex;

 private:
  std::uint32_t n_sbuckets_;
  std::unique_ptr<SBucket[]> sbuckets_;
  std::uint32_t smo_count_;  // writer-only; bumped by resegment, reset by merge
};

/// [lo, hi) covered by a node; hi is the successor's pivot, or +inf (nullopt)
/// for the rightmost node of a level.
struct KeyRange {
  Key lo = 0;
  std::optional<Key> hi;  // exclusive; nullopt = unbounded
};

inline KeyRange range_of(const Node& node, std::optional<Key> successor_pivot) {
  return {node.pivot.load(std::memory_order_relaxed), successor_pivot};
}

}  // namespace bki
