#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bki/config.hpp"
#include "bki/index.hpp"

namespace bki {

struct Op {
  enum class Type { Read, Insert, Scan };
  Type type = Type::Read;
  Key key = 0;
  Value value = 0;
  std::size_t scan_n = 0;
};

/// Reproducible from (seed, params).
struct Workload {
  std::vector<Op> ops;
  std::uint64_t seed = 0;
  unsigned reads = 1;
  unsigned writes = 1;
};

/// reads:writes mixed trace. Reads target keys known to exist (bulk set plus
/// prior inserts) with an occasional miss probe; one read in 64 becomes a
/// short scan when scans are enabled.
inline Workload make_workload(std::span<const Key> base_keys, std::size_t n_ops,
                              unsigned reads, unsigned writes, std::uint64_t seed,
                              bool with_scans = true) {
  Workload w;
  w.seed = seed;
  w.reads = reads;
  w.writes = writes;
  w.ops.reserve(n_ops);
  std::mt19937_64 rng(seed);
  std::vector<Key> known(base_keys.begin(), base_keys.end());
  std::uniform_int_distribution<Key> any_key(1, ~0ull - 1);
  std::uniform_int_distribution<std::uint32_t> pick_mix(1, reads + writes);
  std::uniform_int_distribution<std::uint32_t> d64(0, 63);
  for (std::size_t i = 0; i < n_ops; ++i) {
    const bool is_read = reads > 0 && (writes == 0 || pick_mix(rng) <= reads);
    if (!is_read) {
      Op op;
      op.type = Op::Type::Insert;
      op.key = any_key(rng);
      op.value = rng();
      known.push_back(op.key);
      w.ops.push_back(op);
      continue;
    }
    Op op;
    if (with_scans && d64(rng) == 0) {
      op.type = Op::Type::Scan;
      op.key = any_key(rng);
      op.scan_n = 1 + d64(rng);
    } else {
      op.type = Op::Type::Read;
      const bool miss_probe = known.empty() || d64(rng) < 4;
      op.key = miss_probe
                   ? any_key(rng)
                   : known[std::uniform_int_distribution<std::size_t>(
                         0, known.size() - 1)(rng)];
    }
    w.ops.push_back(op);
  }
  return w;
}

struct DiffResult {
  bool ok = true;
  std::size_t op_index = 0;
  std::string expected;
  std::string actual;
};

/// Ground-truth answers for every Read and Scan in a trace, produced by a
/// deliberately naive ordered map. Computed once; a trace can then be checked
/// against many index configurations without re-running the reference.
struct ExpectedOutputs {
  std::vector<std::optional<Value>> reads;                // in Read-op order
  std::vector<std::vector<std::pair<Key, Value>>> scans;  // in Scan-op order
};

inline ExpectedOutputs compute_expected(const Workload& trace,
                                        std::span<const std::pair<Key, Value>> bulk = {}) {
  ExpectedOutputs ex;
  std::map<Key, Value> oracle(bulk.begin(), bulk.end());
  for (const Op& op : trace.ops) {
    switch (op.type) {
      case Op::Type::Insert:
        oracle[op.key] = op.value;
        break;
      case Op::Type::Read: {
        const auto it = oracle.find(op.key);
        ex.reads.push_back(it == oracle.end() ? std::nullopt
                                              : std::optional<Value>(it->second));
        break;
      }
      case Op::Type::Scan: {
        std::vector<std::pair<Key, Value>> want;
        for (auto it = oracle.lower_bound(op.key);
             it != oracle.end() && want.size() < op.scan_n; ++it)
          want.emplace_back(it->first, it->second);
        ex.scans.push_back(std::move(want));
        break;
      }
    }
  }
  return ex;
}

/// Replays the trace on a fresh index and compares every output against the
/// precomputed ground truth; stops at the first mismatch.
inline DiffResult differential_check_against(const Workload& trace,
                                             const ExpectedOutputs& expected,
                                             const IndexConfig& cfg,
                                             std::span<const std::pair<Key, Value>> bulk = {}) {
  BucketIndex index(cfg);
  if (!bulk.empty()) index.bulk_load(bulk);
  auto fail = [](std::size_t i, std::string exp, std::string act) {
    return DiffResult{false, i, std::move(exp), std::move(act)};
  };
  auto show = [](const std::optional<Value>& v) {
    return v ? std::to_string(*v) : std::string("absent");
  };
  std::size_t n_read = 0, n_scan = 0;
  for (std::size_t i = 0; i < trace.ops.size(); ++i) {
    const Op& op = trace.ops[i];
    switch (op.type) {
      case Op::Type::Insert:
        index.insert(op.key, op.value);
        break;
      case Op::Type::Read: {
        const auto got = index.lookup(op.key);
        const auto& want = expected.reads[n_read++];
        if (got != want) return fail(i, show(want), show(got));
        break;
      }
      case Op::Type::Scan: {
        const auto got = index.range_query(op.key, op.scan_n);
        const auto& want = expected.scans[n_scan++];
        if (got != want) {
          std::ostringstream exp, act;
          exp << want.size() << " pairs";
          act << got.size() << " pairs";
          for (std::size_t j = 0; j < want.size() && j < got.size(); ++j) {
            if (want[j] != got[j]) {
              exp << ", [" << j << "]=(" << want[j].first << "," << want[j].second << ")";
              act << ", [" << j << "]=(" << got[j].first << "," << got[j].second << ")";
              break;
            }
          }
          return fail(i, exp.str(), act.str());
        }
        break;
      }
    }
  }
  return {};
}

/// One-shot form: reference replay plus index replay.
inline DiffResult differential_check(const Workload& trace, const IndexConfig& cfg,
                                     std::span<const std::pair<Key, Value>> bulk = {}) {
  return differential_check_against(trace, compute_expected(trace, bulk), cfg, bulk);
}

}  // namespace bki
