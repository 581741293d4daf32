#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bki/config.hpp"
#include "bki/epoch.hpp"
#include "bki/hints.hpp"
#include "bki/nodes.hpp"
#include "bki/segmentation.hpp"
#include "bki/stats.hpp"

namespace bki {

using RouteEntry = std::pair<Key, Node*>;

namespace detail {

/// The ceil(n/2)-th smallest key; permutes the input. Expected linear time.
inline Key quickselect_median(std::span<Key> keys) {
  assert(!keys.empty());
  auto mid = keys.begin() + static_cast<std::ptrdiff_t>((keys.size() - 1) / 2);
  std::nth_element(keys.begin(), mid, keys.end());
  return *mid;
}

/// Builds one Segment over sorted (pivot, child) entries: ceil(n / (f*C_s))
/// S-Buckets, entries packed sequentially and evenly, model fitted on
/// (pivot -> S-Bucket index).
inline Segment* make_segment(std::span<const RouteEntry> entries, const IndexConfig& cfg,
                             std::uint16_t level, std::uint32_t smo_count) {
  const std::size_t cnt = entries.size();
  assert(cnt >= 1);
  const double per = cfg.initial_fill_ratio * cfg.sbucket_capacity;
  const auto n_sb = std::max<std::uint32_t>(
      1, static_cast<std::uint32_t>(
             std::ceil(static_cast<double>(cnt) / per - 1e-9)));
  const std::size_t base = cnt / n_sb;
  const std::size_t rem = cnt % n_sb;
  assert(base + (rem ? 1 : 0) <= cfg.sbucket_capacity);

  std::vector<Key> pivots(cnt);
  std::vector<std::uint32_t> bucket_of(cnt);
  std::size_t idx = 0;
  for (std::uint32_t b = 0; b < n_sb; ++b) {
    const std::size_t sz = base + (b < rem ? 1 : 0);
    for (std::size_t j = 0; j < sz; ++j, ++idx) {
      pivots[idx] = entries[idx].first;
      bucket_of[idx] = b;
    }
  }
  const LinearModel model = fit_segment_model(pivots, bucket_of);

  auto* seg = new Segment(level, entries[0].first, model, n_sb, cfg.sbucket_capacity,
                          smo_count);
  idx = 0;
  for (std::uint32_t b = 0; b < n_sb; ++b) {
    const std::size_t sz = base + (b < rem ? 1 : 0);
    SBucket& sb = seg->sbucket(b);
    sb.pivot.store(entries[idx].first, std::memory_order_relaxed);
    for (std::size_t j = 0; j < sz; ++j, ++idx) {
      sb.publish_entry(entries[idx].first, entries[idx].second);
    }
  }
  return seg;
}

/// One greedy-corridor pass over the entry pivots; one Segment per cut.
/// Output count < input count whenever input count > f * C_s.
inline std::vector<RouteEntry> build_level(std::span<const RouteEntry> entries,
                                           const IndexConfig& cfg, std::uint16_t level,
                                           std::uint32_t smo_count,
                                           std::vector<Segment*>* created = nullptr) {
  std::vector<Key> pivots(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) pivots[i] = entries[i].first;
  const auto cuts = greedy_corridor(pivots, cfg.corridor_error);
  std::vector<RouteEntry> out;
  out.reserve(cuts.size());
  for (const Cut& c : cuts) {
    Segment* s =
        make_segment(entries.subspan(c.begin, c.end - c.begin), cfg, level, smo_count);
    out.emplace_back(s->pivot.load(std::memory_order_relaxed), s);
    if (created) created->push_back(s);
  }
  return out;
}

}  // namespace detail

/// Updatable in-memory learned index: hierarchical Segments route by linear
/// model to globally ordered, internally unsorted buckets. Single writer,
/// any number of readers; readers never block and never retry unboundedly.
class BucketIndex {
 public:
  using Entry = std::pair<Key, Value>;

  explicit BucketIndex(IndexConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  ~BucketIndex() {
    if (Node* r = root_.load(std::memory_order_relaxed)) free_subtree(r);
    epochs_.reclaim_all();
  }

  BucketIndex(const BucketIndex&) = delete;
  BucketIndex& operator=(const BucketIndex&) = delete;

  const IndexConfig& config() const { return cfg_; }
  SmoStats& stats() { return stats_; }
  const SmoStats& stats() const { return stats_; }
  Instrumentation& instrumentation() const { return instr_; }
  EpochManager& epochs() const { return epochs_; }
  std::size_t size() const { return size_; }

  /// Number of levels including the leaf level; 0 for an empty index.
  std::size_t height() const {
    Node* r = root_.load(std::memory_order_acquire);
    return r ? static_cast<std::size_t>(r->level) + 1 : 0;
  }

  Node* root() const { return root_.load(std::memory_order_acquire); }

  /// Bottom-up single-pass construction from strictly increasing pairs.
  /// The index must be empty.
  void bulk_load(std::span<const Entry> pairs) {
    if (root_.load(std::memory_order_relaxed))
      throw std::logic_error("bulk_load requires an empty index");
    if (pairs.empty()) return;
    for (std::size_t i = 1; i < pairs.size(); ++i) {
      if (pairs[i].first <= pairs[i - 1].first)
        throw std::invalid_argument("bulk_load input must be strictly increasing");
    }
    const auto per = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg_.dbucket_capacity * cfg_.initial_fill_ratio));
    std::vector<RouteEntry> leaves;
    leaves.reserve(pairs.size() / per + 1);
    for (std::size_t i = 0; i < pairs.size(); i += per) {
      const std::size_t end = std::min(pairs.size(), i + per);
      const Key lo = pairs[i].first;
      const Key hi = end < pairs.size() ? pairs[end].first
                                        : std::numeric_limits<Key>::max();
      auto* d = new DBucket(cfg_.dbucket_capacity, lo, lo, hi);
      const HintFn hint = hint_for(*d);
      for (std::size_t j = i; j < end; ++j) {
        d->h_insert(pairs[j].first, pairs[j].second, hint);
        stats_.leaf_entries_loaded.fetch_add(1, std::memory_order_relaxed);
      }
      leaves.emplace_back(lo, d);
    }
    std::vector<RouteEntry> cur = std::move(leaves);
    std::uint16_t lvl = 0;
    do {
      ++lvl;
      cur = detail::build_level(cur, cfg_, lvl, 0);
    } while (cur.size() > 1);
    size_ = pairs.size();
    root_.store(cur[0].second, std::memory_order_release);
  }

  /// Wait-free with respect to the writer. Returns the value of k if a
  /// completed insert placed it.
  std::optional<Value> lookup(Key k) const {
    EpochGuard guard(epochs_);
    Node* n = root_.load(std::memory_order_acquire);
    if (!n) return std::nullopt;
    const bool instr = cfg_.collect_breakdown;
    {
      ScopedTimer t(instr_.segment_lookup_ticks, instr);
      while (n->kind == NodeKind::Segment) n = static_cast<Segment*>(n)->route(k);
    }
    ScopedTimer t(instr_.dbucket_lookup_ticks, instr);
    const auto* d = static_cast<const DBucket*>(n);
    std::uint32_t probes = 0;
    auto res = d->h_lookup(k, hint_for(*d), cfg_.early_stop_on_empty, &probes);
    t.stop();
    if (instr) {
      instr_.record_probes(probes);
      instr_.lookups.fetch_add(1, std::memory_order_relaxed);
    }
    return res;
  }

  /// Writer-only. Bottom-up: H-insert, then at most one D-Bucket split plus a
  /// chain of upward SMOs; pivot updates are applied last.
  void insert(Key k, Value v) {
    WriterScope writer(writer_active_);
    const bool instr = cfg_.collect_breakdown;
    const std::uint64_t t0 = instr ? detail::now_ticks() : 0;
    std::uint64_t mem_ticks = 0;
    insert_impl(k, v, instr, mem_ticks);
    if (instr) {
      const std::uint64_t total = detail::now_ticks() - t0;
      instr_.mem_mgmt_ticks.fetch_add(mem_ticks, std::memory_order_relaxed);
      instr_.insert_ticks.fetch_add(total - std::min(total, mem_ticks),
                                    std::memory_order_relaxed);
      instr_.inserts.fetch_add(1, std::memory_order_relaxed);
    }
  }

  /// The n smallest stored keys >= start, globally sorted. Per-bucket copy +
  /// sort, concatenated in bucket order; sorting may be farmed to `workers`
  /// parallel workers with identical results. Weakly consistent under a
  /// concurrent writer: may miss in-flight inserts, never fabricates.
  std::vector<Entry> range_query(Key start, std::size_t n, unsigned workers = 1,
                                 std::uint64_t* slots_probed = nullptr) const {
    std::vector<Entry> result;
    if (slots_probed) *slots_probed = 0;
    if (n == 0) return result;
    EpochGuard guard(epochs_);
    Node* node = root_.load(std::memory_order_acquire);
    if (!node) return result;

    struct Lvl {
      const Segment* seg;
      std::uint32_t sb;
      Key cur;  // pivot of the entry the cursor descended through
    };
    std::vector<Lvl> stack;
    while (node->kind == NodeKind::Segment) {
      const auto* s = static_cast<const Segment*>(node);
      const std::uint32_t sbi = s->route_sbucket(start);
      const SBucket& sb = s->sbucket(sbi);
      auto [child, piv] = route_with_pivot(sb, start);
      if (!child) return result;
      stack.push_back({s, sbi, piv});
      node = child;
    }

    std::vector<std::vector<Entry>> chunks;
    std::uint64_t probed = 0;
    std::size_t have = 0;
    while (node) {
      const auto* d = static_cast<const DBucket*>(node);
      chunks.emplace_back();
      probed += d->collect(start, chunks.back());
      have += chunks.back().size();
      if (have >= n) break;
      node = advance_cursor(stack);
    }
    if (slots_probed) *slots_probed = probed;

    sort_chunks(chunks, workers);
    for (auto& c : chunks) result.insert(result.end(), c.begin(), c.end());
    // A scan racing an in-flight split can observe a bucket twice through the
    // transient duplicate routing entries; restore order and uniqueness.
    if (!std::is_sorted(result.begin(), result.end(),
                        [](const Entry& a, const Entry& b) { return a.first < b.first; })) {
      std::stable_sort(result.begin(), result.end(),
                       [](const Entry& a, const Entry& b) { return a.first < b.first; });
    }
    result.erase(std::unique(result.begin(), result.end(),
                             [](const Entry& a, const Entry& b) {
                               return a.first == b.first;
                             }),
                 result.end());
    if (result.size() > n) result.resize(n);
    return result;
  }

  std::size_t memory_bytes() const {
    Node* r = root_.load(std::memory_order_acquire);
    return r ? subtree_bytes(r) : 0;
  }

  /// Node counts per level, leaves first.
  std::vector<std::size_t> level_widths() const {
    std::vector<std::size_t> widths;
    Node* r = root_.load(std::memory_order_acquire);
    if (r) count_levels(r, widths);
    return widths;
  }

  /// All stored pairs in key order (quiescent use).
  std::vector<Entry> dump_sorted() const {
    return range_query(0, std::numeric_limits<std::size_t>::max());
  }

  /// Structural self-check for tests; throws std::logic_error on violation.
  void check_invariants() const {
    Node* r = root_.load(std::memory_order_acquire);
    if (!r) return;
    Key max_key = std::numeric_limits<Key>::max();
    std::size_t pairs = check_node(r, r->pivot.load(std::memory_order_relaxed),
                                   max_key, true);
    if (pairs != size_)
      throw std::logic_error("stored pair count disagrees with size()");
  }

  /// Fault-injection hook: clears the valid bit of k's slot.
  bool hide_key_for_fault_injection(Key k) {
    Node* n = root_.load(std::memory_order_relaxed);
    if (!n) return false;
    while (n->kind == NodeKind::Segment) n = static_cast<Segment*>(n)->route(k);
    if (static_cast<DBucket*>(n)->hide_slot_of(k)) {
      --size_;
      return true;
    }
    return false;
  }

 private:
  struct Step {
    Segment* seg;
    std::uint32_t sb;
    std::uint32_t entry;
  };

  /// Debug-build guard for the single-writer external contract.
  struct WriterScope {
    explicit WriterScope(std::atomic<bool>& f) : flag(f) {
#ifndef NDEBUG
      const bool was = flag.exchange(true, std::memory_order_acq_rel);
      assert(!was && "concurrent writers detected");
#endif
    }
    ~WriterScope() {
#ifndef NDEBUG
      flag.store(false, std::memory_order_release);
#endif
    }
    std::atomic<bool>& flag;
  };

  HintFn hint_for(const DBucket& d) const {
    return HintFn{cfg_.hint_kind, d.hint_lo, d.hint_hi};
  }

  static std::pair<Node*, Key> route_with_pivot(const SBucket& sb, Key k) {
    std::array<std::pair<Key, Node*>, 64> es;
    const std::uint32_t n = sb.snapshot(es);
    Node* best = nullptr;
    Key best_p = 0;
    Node* leftmost = nullptr;
    Key leftmost_p = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto [p, c] = es[i];
      if (!leftmost || p < leftmost_p) leftmost = c, leftmost_p = p;
      if (p <= k && (!best || p > best_p)) best = c, best_p = p;
    }
    if (best) return {best, best_p};
    return {leftmost, leftmost_p};
  }

  void insert_impl(Key k, Value v, bool instr, std::uint64_t& mem_ticks) {
    auto timed = [&](auto&& fn) {
      if (!instr) {
        fn();
        return;
      }
      const std::uint64_t a = detail::now_ticks();
      fn();
      mem_ticks += detail::now_ticks() - a;
    };

    Node* r = root_.load(std::memory_order_relaxed);
    if (!r) {
      timed([&] {
        auto* d = new DBucket(cfg_.dbucket_capacity, k, k, std::numeric_limits<Key>::max());
        d->h_insert(k, v, hint_for(*d));
        root_.store(d, std::memory_order_release);
      });
      size_ = 1;
      return;
    }

    std::vector<Step> path;
    Node* n = r;
    while (n->kind == NodeKind::Segment) {
      auto* s = static_cast<Segment*>(n);
      const std::uint32_t sbi = s->route_sbucket(k);
      const std::uint32_t ei = s->sbucket(sbi).route_slot(k);
      path.push_back({s, sbi, ei});
      n = s->sbucket(sbi).entry_child(ei);
    }
    auto* leaf = static_cast<DBucket*>(n);
    const InsertOutcome out = leaf->h_insert(k, v, hint_for(*leaf));
    if (out == InsertOutcome::Overwrote) return;
    if (out == InsertOutcome::Placed) {
      ++size_;
      lower_pivots(k);
      return;
    }

    timed([&] {
      auto [left, right] = split_bucket(leaf, k, v);
      stats_.dbucket_splits.fetch_add(1, std::memory_order_relaxed);
      std::vector<RouteEntry> entries{
          {left->pivot.load(std::memory_order_relaxed), left},
          {right->pivot.load(std::memory_order_relaxed), right}};
      propagate(path, leaf, std::move(entries));
    });
    ++size_;
    lower_pivots(k);
  }

  /// Lowers pivots along the covering path when k is below the global
  /// minimum. Applied after the entry is visible.
  void lower_pivots(Key k) {
    Node* n = root_.load(std::memory_order_relaxed);
    if (!n || k >= n->pivot.load(std::memory_order_relaxed)) return;
    while (true) {
      if (k < n->pivot.load(std::memory_order_relaxed))
        n->pivot.store(k, std::memory_order_release);
      if (n->kind == NodeKind::DBucket) return;
      auto* s = static_cast<Segment*>(n);
      SBucket& sb = s->sbucket(s->route_sbucket(k));
      if (k < sb.pivot.load(std::memory_order_relaxed))
        sb.pivot.store(k, std::memory_order_release);
      const std::uint32_t ei = sb.route_slot(k);
      if (k < sb.entry_pivot(ei)) sb.lower_entry_pivot(ei, k);
      n = sb.entry_child(ei);
    }
  }

  /// RCU split: old bucket stays untouched; keys <= median go left, the rest
  /// right, the in-flight pair included.
  std::pair<DBucket*, DBucket*> split_bucket(DBucket* old, Key k, Value v) {
    std::vector<Entry> pairs;
    pairs.reserve(old->capacity + 1);
    old->collect(0, pairs);
    pairs.emplace_back(k, v);

    std::vector<Key> keys(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) keys[i] = pairs[i].first;
    const Key median = detail::quickselect_median(keys);

    Key left_min = std::numeric_limits<Key>::max();
    Key right_min = std::numeric_limits<Key>::max();
    for (const auto& [pk, pv] : pairs) {
      if (pk <= median) left_min = std::min(left_min, pk);
      else right_min = std::min(right_min, pk);
    }
    auto* left = new DBucket(cfg_.dbucket_capacity, left_min, left_min, right_min);
    auto* right = new DBucket(cfg_.dbucket_capacity, right_min, right_min, old->hint_hi);
    const HintFn lh = hint_for(*left);
    const HintFn rh = hint_for(*right);
    for (const auto& [pk, pv] : pairs) {
      if (pk <= median) left->h_insert(pk, pv, lh);
      else right->h_insert(pk, pv, rh);
    }
    return {left, right};
  }

  /// Publishes `entries` in place of old_child's routing entry; when the
  /// target S-Bucket cannot take them, runs the combined SMO at the parent.
  /// Old entries are invalidated only after every replacement is visible.
  void propagate(std::vector<Step> path, Node* old_child, std::vector<RouteEntry> entries) {
    if (path.empty()) {
      replace_root(old_child, std::move(entries));
      return;
    }
    const Step s = path.back();
    SBucket& sb = s.seg->sbucket(s.sb);
    if (sb.free_slots() >= entries.size()) {
      // Descending pivot order: the lowest new entry ties with the old one on
      // pivot, and a reader may prefer it by slot order. Publishing the higher
      // halves first means any tied winner already covers only its own range.
      for (auto it = entries.rbegin(); it != entries.rend(); ++it)
        sb.publish_entry(it->first, it->second);
      sb.invalidate_entry(s.entry);
      epochs_.retire(old_child);
      return;
    }

    Segment* parent = s.seg;
    if (mean_smo(parent) >= static_cast<double>(cfg_.merge_threshold) &&
        merge_neighbors(parent, entries, old_child, path)) {
      stats_.merges.fetch_add(1, std::memory_order_relaxed);
      epochs_.retire(old_child);
      return;
    }

    auto new_segs = resegment(parent, entries, old_child);
    stats_.resegments.fetch_add(1, std::memory_order_relaxed);
    path.pop_back();
    propagate(std::move(path), parent, std::move(new_segs));
    epochs_.retire(old_child);
  }

  void replace_root(Node* old_root, std::vector<RouteEntry> entries) {
    assert(!entries.empty());
    std::uint16_t lvl = entries[0].second->level;
    while (entries.size() > 1) {
      ++lvl;
      entries = detail::build_level(entries, cfg_, lvl, 0);
    }
    root_.store(entries[0].second, std::memory_order_release);
    epochs_.retire(old_root);
  }

  /// Scaling + retraining + splitting in one pass: merges the segment's
  /// entries with the replacements, re-cuts with the corridor, and emits one
  /// fresh Segment per cut (smo_count inherited + 1).
  std::vector<RouteEntry> resegment(Segment* seg, const std::vector<RouteEntry>& new_entries,
                                    Node* drop_child) {
    auto merged = merged_entries(seg, new_entries, drop_child);
    return detail::build_level(merged, cfg_, seg->level, seg->smo_count() + 1);
  }

  std::vector<RouteEntry> merged_entries(const Segment* seg,
                                         const std::vector<RouteEntry>& new_entries,
                                         Node* drop_child) const {
    auto entries = seg->collect_entries_sorted();
    std::erase_if(entries, [&](const RouteEntry& e) { return e.second == drop_child; });
    std::vector<RouteEntry> merged;
    merged.reserve(entries.size() + new_entries.size());
    std::merge(entries.begin(), entries.end(), new_entries.begin(), new_entries.end(),
               std::back_inserter(merged),
               [](const RouteEntry& a, const RouteEntry& b) { return a.first < b.first; });
    return merged;
  }

  double mean_smo(Segment* seg) const {
    double sum = seg->smo_count();
    int cnt = 1;
    Key p = seg->pivot.load(std::memory_order_relaxed);
    for (std::uint32_t i = 0; i < cfg_.neighbor_window; ++i) {
      Node* q = max_below(p, seg->level);
      if (!q) break;
      sum += static_cast<Segment*>(q)->smo_count();
      ++cnt;
      p = q->pivot.load(std::memory_order_relaxed);
    }
    p = seg->pivot.load(std::memory_order_relaxed);
    for (std::uint32_t i = 0; i < cfg_.neighbor_window; ++i) {
      Node* q = min_above(p, seg->level);
      if (!q) break;
      sum += static_cast<Segment*>(q)->smo_count();
      ++cnt;
      p = q->pivot.load(std::memory_order_relaxed);
    }
    return sum / cnt;
  }

  /// Rightmost node at `level` with pivot < p (predecessor descent).
  Node* max_below(Key p, std::uint16_t level) const {
    Node* r = root_.load(std::memory_order_relaxed);
    return r && r->level >= level ? max_below_in(r, p, level) : nullptr;
  }

  Node* max_below_in(Node* n, Key p, std::uint16_t level) const {
    if (n->level == level)
      return n->pivot.load(std::memory_order_relaxed) < p ? n : nullptr;
    auto entries = static_cast<Segment*>(n)->collect_entries_sorted();
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
      if (it->first >= p) continue;
      if (Node* found = max_below_in(it->second, p, level)) return found;
    }
    return nullptr;
  }

  /// Leftmost node at `level` with pivot > p (successor descent).
  Node* min_above(Key p, std::uint16_t level) const {
    Node* r = root_.load(std::memory_order_relaxed);
    return r && r->level >= level ? min_above_in(r, p, level) : nullptr;
  }

  Node* min_above_in(Node* n, Key p, std::uint16_t level) const {
    if (n->level == level)
      return n->pivot.load(std::memory_order_relaxed) > p ? n : nullptr;
    auto entries = static_cast<Segment*>(n)->collect_entries_sorted();
    std::size_t start = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].first <= p) start = i;
      else break;
    }
    for (std::size_t i = start; i < entries.size(); ++i) {
      if (Node* found = min_above_in(entries[i].second, p, level)) return found;
    }
    return nullptr;
  }

  std::vector<Step> path_to(Node* target) const {
    const Key p = target->pivot.load(std::memory_order_relaxed);
    std::vector<Step> out;
    Node* n = root_.load(std::memory_order_relaxed);
    while (n != target) {
      auto* s = static_cast<Segment*>(n);
      const std::uint32_t sbi = s->route_sbucket(p);
      const std::uint32_t ei = s->sbucket(sbi).route_slot(p);
      out.push_back({s, sbi, ei});
      n = s->sbucket(sbi).entry_child(ei);
    }
    return out;
  }

  /// Child-entry pivots of a segment, with old_child swapped for the
  /// replacement pivots when it is the segment being patched.
  std::vector<Key> pivots_of(const Segment* s, const Segment* patched,
                             const std::vector<RouteEntry>& new_entries,
                             Node* drop_child) const {
    std::vector<RouteEntry> entries =
        s == patched ? merged_entries(s, new_entries, drop_child)
                     : s->collect_entries_sorted();
    std::vector<Key> pivots(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) pivots[i] = entries[i].first;
    return pivots;
  }

  /// Alg-3 style merge: grow a run of linearly compatible sibling segments,
  /// rebuild the LCA subtree bottom-up from its D-Bucket entries, and splice
  /// it in via RCU. Returns false when no neighbor is admissible or the
  /// rebuilt subtree cannot match the LCA's height; the caller then falls
  /// back to resegmenting.
  bool merge_neighbors(Segment* seg, const std::vector<RouteEntry>& new_entries,
                       Node* drop_child, const std::vector<Step>& path) {
    (void)path;
    std::deque<Segment*> run{seg};
    std::vector<Key> combined = pivots_of(seg, seg, new_entries, drop_child);
    const double eps = cfg_.corridor_error;

    while (true) {
      Node* q = max_below(run.front()->pivot.load(std::memory_order_relaxed), seg->level);
      if (!q) break;
      auto* cand = static_cast<Segment*>(q);
      std::vector<Key> candidate = pivots_of(cand, seg, new_entries, drop_child);
      candidate.insert(candidate.end(), combined.begin(), combined.end());
      if (greedy_corridor(candidate, eps).size() != 1) break;
      run.push_front(cand);
      combined = std::move(candidate);
    }
    while (true) {
      Node* q = min_above(run.back()->pivot.load(std::memory_order_relaxed), seg->level);
      if (!q) break;
      auto* cand = static_cast<Segment*>(q);
      std::vector<Key> candidate = combined;
      auto extra = pivots_of(cand, seg, new_entries, drop_child);
      candidate.insert(candidate.end(), extra.begin(), extra.end());
      if (greedy_corridor(candidate, eps).size() != 1) break;
      run.push_back(cand);
      combined = std::move(candidate);
    }
    if (run.size() == 1) return false;

    auto lp = path_to(run.front());
    auto rp = path_to(run.back());
    std::size_t j = 0;
    while (j < lp.size() && j < rp.size() && lp[j].seg == rp[j].seg &&
           lp[j].sb == rp[j].sb && lp[j].entry == rp[j].entry)
      ++j;
    assert(j < lp.size() && j < rp.size() && lp[j].seg == rp[j].seg);
    Segment* lca = lp[j].seg;

    std::vector<RouteEntry> leaf_entries;
    std::vector<Node*> discard;
    collect_leaves(lca, drop_child, new_entries, leaf_entries, discard);

    std::vector<Segment*> fresh;
    std::vector<RouteEntry> cur = std::move(leaf_entries);
    std::uint16_t lvl = 0;
    bool fits = true;
    while (cur.size() > 1 || lvl == 0) {
      ++lvl;
      if (lvl > lca->level) {
        fits = false;
        break;
      }
      cur = detail::build_level(cur, cfg_, lvl, 0, &fresh);
    }
    while (fits && lvl < lca->level) {
      ++lvl;
      cur = detail::build_level(cur, cfg_, lvl, 0, &fresh);
    }
    if (!fits) {
      for (Segment* s : fresh) delete s;  // never published
      return false;
    }

    std::vector<Step> lca_path(lp.begin(), lp.begin() + static_cast<std::ptrdiff_t>(j));
    propagate(std::move(lca_path), lca, {{cur[0].first, cur[0].second}});
    for (Node* n : discard) {
      if (n != lca) epochs_.retire(n);  // lca itself retired by propagate
    }
    return true;
  }

  /// In-order (pivot, D-Bucket) pairs under `n`, walking the replacement
  /// entries instead of drop_child. Every visited Segment lands in `discard`.
  void collect_leaves(Node* n, Node* drop_child, const std::vector<RouteEntry>& subst,
                      std::vector<RouteEntry>& out, std::vector<Node*>& discard) const {
    if (n == drop_child) {
      for (const auto& [p, child] : subst)
        collect_leaves(child, nullptr, {}, out, discard);
      return;
    }
    if (n->kind == NodeKind::DBucket) {
      out.emplace_back(n->pivot.load(std::memory_order_relaxed), n);
      return;
    }
    discard.push_back(n);
    auto* s = static_cast<Segment*>(n);
    for (const auto& [p, child] : s->collect_entries_sorted())
      collect_leaves(child, drop_child, subst, out, discard);
  }

  // ---- quiescent tree walks ----

  static void free_subtree(Node* n) {
    if (n->kind == NodeKind::Segment) {
      auto* s = static_cast<Segment*>(n);
      for (const auto& [p, child] : s->collect_entries_sorted()) free_subtree(child);
    }
    delete n;
  }

  static std::size_t subtree_bytes(Node* n) {
    if (n->kind == NodeKind::DBucket) return static_cast<DBucket*>(n)->memory_bytes();
    auto* s = static_cast<Segment*>(n);
    std::size_t b = s->memory_bytes();
    for (const auto& [p, child] : s->collect_entries_sorted()) b += subtree_bytes(child);
    return b;
  }

  static void count_levels(Node* n, std::vector<std::size_t>& widths) {
    if (widths.size() <= n->level) widths.resize(n->level + 1, 0);
    ++widths[n->level];
    if (n->kind == NodeKind::Segment) {
      auto* s = static_cast<Segment*>(n);
      for (const auto& [p, child] : s->collect_entries_sorted())
        count_levels(child, widths);
    }
  }

  std::size_t check_node(Node* n, Key lo, Key hi_exclusive_or_max, bool rightmost) const {
    const Key piv = n->pivot.load(std::memory_order_relaxed);
    if (piv != lo) throw std::logic_error("node pivot != range lower bound");
    if (n->kind == NodeKind::DBucket) {
      const auto* d = static_cast<const DBucket*>(n);
      std::uint32_t cnt = 0;
      Key min_seen = std::numeric_limits<Key>::max();
      for (std::uint32_t i = 0; i < d->capacity; ++i) {
        if (!d->is_valid(i)) continue;
        ++cnt;
        const Key k = d->key_at(i);
        min_seen = std::min(min_seen, k);
        if (k < piv) throw std::logic_error("D-Bucket key below pivot");
        if (!rightmost && k >= hi_exclusive_or_max)
          throw std::logic_error("D-Bucket key outside range");
      }
      if (cnt != d->count()) throw std::logic_error("D-Bucket count/bitmask mismatch");
      if (cnt > 0 && min_seen != piv) throw std::logic_error("D-Bucket pivot not min key");
      return cnt;
    }
    const auto* s = static_cast<const Segment*>(n);
    std::size_t pairs = 0;
    Key prev_sb = 0;
    bool first_sb = true;
    std::vector<RouteEntry> all;
    for (std::uint32_t b = 0; b < s->n_sbuckets(); ++b) {
      const SBucket& sb = s->sbucket(b);
      const Key sbp = sb.pivot.load(std::memory_order_relaxed);
      if (first_sb) {
        if (sbp != piv) throw std::logic_error("segment pivot != first S-Bucket pivot");
      } else if (sbp <= prev_sb) {
        throw std::logic_error("S-Bucket pivots not increasing");
      }
      std::uint64_t mask = sb.valid_mask();
      if (static_cast<std::uint32_t>(std::popcount(mask)) != sb.count())
        throw std::logic_error("S-Bucket count/bitmask mismatch");
      Key min_entry = std::numeric_limits<Key>::max();
      while (mask) {
        const auto i = static_cast<std::uint32_t>(std::countr_zero(mask));
        mask &= mask - 1;
        const Key p = sb.entry_pivot(i);
        min_entry = std::min(min_entry, p);
        if (p < sbp) throw std::logic_error("entry pivot below S-Bucket pivot");
        all.emplace_back(p, sb.entry_child(i));
      }
      if (sb.count() == 0) throw std::logic_error("empty S-Bucket");
      if (min_entry != sbp) throw std::logic_error("S-Bucket pivot not min entry pivot");
      prev_sb = sbp;
      first_sb = false;
    }
    std::sort(all.begin(), all.end(),
              [](const RouteEntry& a, const RouteEntry& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (i + 1 < all.size() && all[i].first >= all[i + 1].first)
        throw std::logic_error("duplicate entry pivot");
      Node* child = all[i].second;
      if (child->level + 1 != s->level)
        throw std::logic_error("child level mismatch (non-uniform tree)");
      const Key child_hi = i + 1 < all.size() ? all[i + 1].first : hi_exclusive_or_max;
      const bool child_rightmost = rightmost && i + 1 == all.size();
      pairs += check_node(child, all[i].first, child_hi, child_rightmost);
    }
    return pairs;
  }

  static void sort_chunks(std::vector<std::vector<Entry>>& chunks, unsigned workers) {
    auto sort_one = [](std::vector<Entry>& c) {
      std::sort(c.begin(), c.end(),
                [](const Entry& a, const Entry& b) { return a.first < b.first; });
    };
    if (workers <= 1 || chunks.size() <= 1) {
      for (auto& c : chunks) sort_one(c);
      return;
    }
    const unsigned n_workers = std::min<unsigned>(workers, chunks.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> futs;
    futs.reserve(n_workers);
    for (unsigned w = 0; w < n_workers; ++w) {
      futs.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next.fetch_add(1); i < chunks.size(); i = next.fetch_add(1))
          sort_one(chunks[i]);
      }));
    }
    for (auto& f : futs) f.get();
  }

  /// Next leaf in pivot order via the descent-cursor stack.
  template <typename Stack>
  static Node* advance_cursor(Stack& stack) {
    while (!stack.empty()) {
      auto& top = stack.back();
      const Segment* s = top.seg;
      // smallest entry pivot > top.cur within the current S-Bucket
      for (std::uint32_t sbi = top.sb; sbi < s->n_sbuckets(); ++sbi) {
        const SBucket& sb = s->sbucket(sbi);
        std::array<std::pair<Key, Node*>, 64> es;
        const std::uint32_t cnt = sb.snapshot(es);
        Node* best = nullptr;
        Key best_p = 0;
        for (std::uint32_t i = 0; i < cnt; ++i) {
          const auto [p, c] = es[i];
          if (p <= top.cur) continue;
          if (!best || p < best_p) best = c, best_p = p;
        }
        if (best) {
          top.sb = sbi;
          top.cur = best_p;
          return descend_leftmost(stack, best);
        }
      }
      stack.pop_back();
    }
    return nullptr;
  }

  template <typename Stack>
  static Node* descend_leftmost(Stack& stack, Node* n) {
    while (n->kind == NodeKind::Segment) {
      const auto* s = static_cast<const Segment*>(n);
      const SBucket& sb = s->sbucket(0);
      std::array<std::pair<Key, Node*>, 64> es;
      const std::uint32_t cnt = sb.snapshot(es);
      Node* best = nullptr;
      Key best_p = 0;
      for (std::uint32_t i = 0; i < cnt; ++i) {
        if (!best || es[i].first < best_p) best = es[i].second, best_p = es[i].first;
      }
      if (!best) return nullptr;  // transient empty view; treat as exhausted
      stack.push_back({s, 0, best_p});
      n = best;
    }
    return n;
  }

  IndexConfig cfg_;
  std::atomic<Node*> root_{nullptr};
  mutable EpochManager epochs_;
  SmoStats stats_;
  mutable Instrumentation instr_;
  std::size_t size_ = 0;  // writer-only
  std::atomic<bool> writer_active_{false};
};

}  // namespace bki
