#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bki/config.hpp"

namespace bki {

/// Three key distributions of increasing segmentation hardness:
/// piecewiseLinear (a few exact linear runs), uniform (near-linear CDF with
/// order-statistic noise), lognormal (wide, quantized, heavily clustered).
enum class SyntheticKind { PiecewiseLinear, Uniform, Lognormal };

inline const char* to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::PiecewiseLinear: return "piecewise";
    case SyntheticKind::Uniform: return "uniform";
    case SyntheticKind::Lognormal: return "lognormal";
  }
  return "?";
}

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "piecewise") return SyntheticKind::PiecewiseLinear;
  if (s == "uniform") return SyntheticKind::Uniform;
  if (s == "lognormal") return SyntheticKind::Lognormal;
  throw std::invalid_argument("unknown synthetic kind: " + s);
}

/// Deterministic per (kind, n, seed); strictly increasing, exactly n keys.
inline std::vector<Key> gen_synthetic(SyntheticKind kind, std::size_t n,
                                      std::uint64_t seed) {
  if (n == 0) return {};
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(kind));
  std::set<Key> keys;

  switch (kind) {
    case SyntheticKind::PiecewiseLinear: {
      // 3 exact arithmetic runs with distinct slopes and gaps between them.
      const std::size_t pieces = 3;
      std::uniform_int_distribution<Key> step_dist(1, 1000);
      std::uniform_int_distribution<Key> gap_dist(1u << 20, 1u << 24);
      Key cur = gap_dist(rng);
      std::size_t made = 0;
      for (std::size_t p = 0; p < pieces; ++p) {
        const Key step = step_dist(rng);
        const std::size_t len =
            p + 1 == pieces ? n - made : (n + pieces - 1) / pieces;
        for (std::size_t i = 0; i < len && made < n; ++i, ++made) {
          keys.insert(cur);
          cur += step;
        }
        cur += gap_dist(rng);
      }
      break;
    }
    case SyntheticKind::Uniform: {
      std::uniform_int_distribution<Key> dist(1, ~0ull - 1);
      while (keys.size() < n) keys.insert(dist(rng));
      break;
    }
    case SyntheticKind::Lognormal: {
      // Wide sigma, quantized to integers: long flat clusters near 0 and a
      // sparse heavy tail; the rank function is far from piecewise linear.
      std::lognormal_distribution<double> dist(0.0, 2.5);
      while (keys.size() < n) {
        const double x = dist(rng) * 1e6;
        if (x >= 1.0 && x < 9.2e18) keys.insert(static_cast<Key>(x));
      }
      break;
    }
  }
  // Arithmetic runs can collide across pieces; top up deterministically.
  std::uniform_int_distribution<Key> fill(1, ~0ull - 1);
  while (keys.size() < n) keys.insert(fill(rng));
  return {keys.begin(), keys.end()};
}

}  // namespace bki
