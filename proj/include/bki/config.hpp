#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bki {

using Key = std::uint64_t;
using Value = std::uint64_t;

/// Hint functions map a key to a suggested slot inside a D-Bucket.
/// They affect probe distance only, never correctness.
enum class HintKind { Mod, ClMul, EndpointLinear };

inline const char* to_string(HintKind k) {
  switch (k) {
    case HintKind::Mod: return "mod";
    case HintKind::ClMul: return "clmul";
    case HintKind::EndpointLinear: return "endpoint";
  }
  return "?";
}

inline HintKind hint_kind_from_string(const std::string& s) {
  if (s == "mod") return HintKind::Mod;
  if (s == "clmul") return HintKind::ClMul;
  if (s == "endpoint") return HintKind::EndpointLinear;
  throw std::invalid_argument("unknown hint kind: " + s);
}

/// All index tunables. Defaults target cache friendliness on 64B lines.
struct IndexConfig {
  std::uint32_t dbucket_capacity = 256;  // slots per D-Bucket
  std::uint32_t sbucket_capacity = 16;   // routing entries per S-Bucket
  double initial_fill_ratio = 0.6;       // occupancy of freshly built buckets
  double corridor_error = 32.0;          // rank error bound for segmentation
  std::uint32_t merge_threshold = 3;     // SMO-count mean that triggers merging
  std::uint32_t neighbor_window = 1;     // siblings per side in the SMO indicator
  HintKind hint_kind = HintKind::ClMul;
  bool early_stop_on_empty = true;       // stop probes at the first empty slot
  bool collect_breakdown = false;        // enable scoped timers + probe histogram

  void validate() const {
    if (dbucket_capacity < 2) throw std::invalid_argument("dbucket_capacity must be >= 2");
    if (sbucket_capacity < 2) throw std::invalid_argument("sbucket_capacity must be >= 2");
    if (sbucket_capacity > 64)
      throw std::invalid_argument("sbucket_capacity must be <= 64 (one valid-bit word)");
    if (!(initial_fill_ratio > 0.0) || initial_fill_ratio > 1.0)
      throw std::invalid_argument("initial_fill_ratio must be in (0, 1]");
    if (!(corridor_error >= 1.0)) throw std::invalid_argument("corridor_error must be >= 1");
    if (merge_threshold < 1) throw std::invalid_argument("merge_threshold must be >= 1");
    if (neighbor_window < 1) throw std::invalid_argument("neighbor_window must be >= 1");
  }
};

}  // namespace bki
