#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bki/index.hpp"
#include "bki/stats.hpp"

namespace bki {

/// Wall-time attribution. Percentages are per operation class: the two get()
/// scopes sum to 100, the two put() scopes sum to 100 (0 when the class never
/// ran).
struct Breakdown {
  double segment_lookup_pct = 0.0;
  double dbucket_lookup_pct = 0.0;
  double insert_pct = 0.0;
  double mem_mgmt_pct = 0.0;
};

struct MetricsReport {
  std::vector<std::size_t> level_node_counts;  // leaves first
  std::vector<double> mean_fanout_per_level;   // child entries per node, levels >= 1
  std::optional<double> e_lookup;              // ops per second
  std::optional<double> e_insert;              // ops per second
  double o_mem = 0.0;
  Breakdown breakdown;
  std::vector<std::uint64_t> probe_histogram;
  std::uint64_t dbucket_splits = 0;
  std::uint64_t resegments = 0;
  std::uint64_t merges = 0;
  std::uint64_t shifts_performed = 0;
};

/// Reciprocal of the mean per-op latency: N / sum(t_i). Empty input has no
/// defined value.
inline std::optional<double> compute_e_lookup(std::span<const double> latencies) {
  if (latencies.empty()) return std::nullopt;
  double sum = 0.0;
  for (double t : latencies) sum += t;
  if (sum <= 0.0) return std::nullopt;
  return static_cast<double>(latencies.size()) / sum;
}

/// N / sum(t_insert_i - t_lookup_i): insert efficiency net of the descent that
/// any lookup would also pay.
inline std::optional<double> compute_e_insert(
    std::span<const std::pair<double, double>> insert_lookup_pairs) {
  if (insert_lookup_pairs.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& [ti, tl] : insert_lookup_pairs) sum += ti - tl;
  if (sum <= 0.0) return std::nullopt;
  return static_cast<double>(insert_lookup_pairs.size()) / sum;
}

/// Total structure bytes (slots, bitmasks, models, routing entries, headers)
/// over the payload bytes they index.
inline double compute_o_mem(const BucketIndex& index, std::size_t payload_bytes) {
  if (payload_bytes == 0) throw std::invalid_argument("payload_bytes must be > 0");
  return static_cast<double>(index.memory_bytes()) / static_cast<double>(payload_bytes);
}

inline Breakdown time_breakdown(const Instrumentation& instr) {
  Breakdown b;
  const auto seg = static_cast<double>(instr.segment_lookup_ticks.load(std::memory_order_relaxed));
  const auto dbk = static_cast<double>(instr.dbucket_lookup_ticks.load(std::memory_order_relaxed));
  const auto ins = static_cast<double>(instr.insert_ticks.load(std::memory_order_relaxed));
  const auto mem = static_cast<double>(instr.mem_mgmt_ticks.load(std::memory_order_relaxed));
  if (seg + dbk > 0.0) {
    b.segment_lookup_pct = 100.0 * seg / (seg + dbk);
    b.dbucket_lookup_pct = 100.0 * dbk / (seg + dbk);
  }
  if (ins + mem > 0.0) {
    b.insert_pct = 100.0 * ins / (ins + mem);
    b.mem_mgmt_pct = 100.0 * mem / (ins + mem);
  }
  return b;
}

namespace detail {

inline void fanout_walk(const Node* n, std::vector<std::size_t>& nodes,
                        std::vector<std::size_t>& children) {
  if (nodes.size() <= n->level) {
    nodes.resize(n->level + 1, 0);
    children.resize(n->level + 1, 0);
  }
  ++nodes[n->level];
  if (n->kind != NodeKind::Segment) return;
  const auto* s = static_cast<const Segment*>(n);
  const auto entries = s->collect_entries_sorted();
  children[n->level] += entries.size();
  for (const auto& [p, child] : entries) fanout_walk(child, nodes, children);
}

}  // namespace detail

inline MetricsReport collect_report(const BucketIndex& index, std::size_t payload_bytes,
                                    std::optional<double> e_lookup = std::nullopt,
                                    std::optional<double> e_insert = std::nullopt) {
  MetricsReport r;
  std::vector<std::size_t> children;
  if (const Node* root = index.root())
    detail::fanout_walk(root, r.level_node_counts, children);
  r.mean_fanout_per_level.resize(r.level_node_counts.size(), 0.0);
  for (std::size_t lvl = 1; lvl < r.level_node_counts.size(); ++lvl) {
    if (r.level_node_counts[lvl])
      r.mean_fanout_per_level[lvl] = static_cast<double>(children[lvl]) /
                                     static_cast<double>(r.level_node_counts[lvl]);
  }
  r.e_lookup = e_lookup;
  r.e_insert = e_insert;
  r.o_mem = payload_bytes ? compute_o_mem(index, payload_bytes) : 0.0;
  r.breakdown = time_breakdown(index.instrumentation());
  const auto& instr = index.instrumentation();
  r.probe_histogram.resize(Instrumentation::kProbeBuckets);
  for (std::size_t i = 0; i < Instrumentation::kProbeBuckets; ++i)
    r.probe_histogram[i] = instr.probe_hist[i].load(std::memory_order_relaxed);
  const auto& s = index.stats();
  r.dbucket_splits = s.dbucket_splits.load(std::memory_order_relaxed);
  r.resegments = s.resegments.load(std::memory_order_relaxed);
  r.merges = s.merges.load(std::memory_order_relaxed);
  r.shifts_performed = s.shifts_performed.load(std::memory_order_relaxed);
  return r;
}

}  // namespace bki
