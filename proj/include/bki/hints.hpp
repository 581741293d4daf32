#pragma once

#include <cstdint>

#include "bki/config.hpp"

namespace bki {

/// MOD hash: h(k) = k % C.
inline std::uint32_t mod_hint(Key k, std::uint32_t slots) {
  return static_cast<std::uint32_t>(k % slots);
}

/// 64-bit multiply-shift mixer (MurmurHash3 finalizer constants). Used as a
/// portable stand-in for a carry-less-multiply hash: the contract is the
/// avalanche property, not the instruction.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

inline std::uint32_t clmul_hint(Key k, std::uint32_t slots) {
  return static_cast<std::uint32_t>(mix64(k) % slots);
}

/// Linear interpolation between the bucket's pivot and its successor's pivot.
/// Degenerate ranges and keys below lo land in slot 0.
inline std::uint32_t endpoint_linear_hint(Key k, Key lo, Key hi, std::uint32_t slots) {
  if (hi <= lo || k <= lo) return 0;
  if (k >= hi) return slots - 1;
  const auto num = static_cast<unsigned __int128>(k - lo) * slots;
  const auto slot = static_cast<std::uint64_t>(num / (hi - lo));
  return slot >= slots ? slots - 1 : static_cast<std::uint32_t>(slot);
}

/// A bound hint function: kind plus, for EndpointLinear, the key range
/// endpoints frozen at bucket creation.
struct HintFn {
  HintKind kind = HintKind::ClMul;
  Key lo = 0;
  Key hi = 0;

  std::uint32_t operator()(Key k, std::uint32_t slots) const {
    switch (kind) {
      case HintKind::Mod: return mod_hint(k, slots);
      case HintKind::ClMul: return clmul_hint(k, slots);
      case HintKind::EndpointLinear: return endpoint_linear_hint(k, lo, hi, slots);
    }
    return 0;
  }
};

}  // namespace bki
