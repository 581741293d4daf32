#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "bki/config.hpp"

namespace bki {

/// Linear rank/bucket predictor. Predictions are evaluated relative to an
/// origin key so that slope * key products stay well conditioned for large
/// 64-bit keys.
struct LinearModel {
  double slope = 0.0;
  double intercept = 0.0;
  Key origin = 0;

  double predict(Key k) const {
    const double d = k >= origin ? static_cast<double>(k - origin)
                                 : -static_cast<double>(origin - k);
    return slope * d + intercept;
  }
};

/// clamp(floor(m(k)), 0, n_buckets - 1)
inline std::size_t model_predict_bucket(const LinearModel& m, Key k, std::size_t n_buckets) {
  const double p = std::floor(m.predict(k));
  if (!(p > 0.0)) return 0;
  if (p >= static_cast<double>(n_buckets - 1)) return n_buckets - 1;
  return static_cast<std::size_t>(p);
}

/// Shrinking feasible-slope interval anchored at the first key of the current
/// cut. Admitting (key, rank) intersects the interval with
/// [(rank - eps) / dk, (rank + eps) / dk]; an empty intersection closes the cut.
struct Corridor {
  Key origin_key = 0;
  std::size_t origin_rank = 0;
  double lo_slope = 0.0;
  double hi_slope = std::numeric_limits<double>::infinity();

  explicit Corridor(Key k = 0, std::size_t rank = 0) : origin_key(k), origin_rank(rank) {}

  /// Tries to admit a key at absolute rank `rank`; returns false (state
  /// unchanged) when the interval would become empty.
  bool admit(Key k, std::size_t rank, double eps) {
    const double dk = static_cast<double>(k - origin_key);
    const double r = static_cast<double>(rank - origin_rank);
    const double lo = (r - eps) / dk;
    const double hi = (r + eps) / dk;
    const double nlo = lo > lo_slope ? lo : lo_slope;
    const double nhi = hi < hi_slope ? hi : hi_slope;
    if (nlo > nhi) return false;
    lo_slope = nlo;
    hi_slope = nhi;
    return true;
  }

  /// Midpoint slope of the (closed) interval; 0 for a single-key corridor.
  double slope() const {
    if (hi_slope == std::numeric_limits<double>::infinity()) return 0.0;
    return 0.5 * (lo_slope + hi_slope);
  }
};

/// One contiguous segment of the input: [begin, end) with its fitted model.
struct Cut {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  LinearModel model;    // predicts rank local to the cut
};

/// Single-pass greedy segmentation with bounded rank error: every emitted cut
/// satisfies |model.predict(k_i) - (i - begin)| <= eps. Keys must be strictly
/// increasing.
inline std::vector<Cut> greedy_corridor(std::span<const Key> keys, double eps) {
  std::vector<Cut> cuts;
  const std::size_t n = keys.size();
  if (n == 0) return cuts;
  std::size_t start = 0;
  Corridor c(keys[0], 0);
  for (std::size_t i = 1; i < n; ++i) {
    if (!c.admit(keys[i], i, eps)) {
      const double a = c.slope();
      cuts.push_back({start, i, LinearModel{a, 0.0, keys[start]}});
      start = i;
      c = Corridor(keys[i], i);
    }
  }
  const double a = c.slope();
  cuts.push_back({start, n, LinearModel{a, 0.0, keys[start]}});
  return cuts;
}

namespace detail {

/// Least squares y = a*(x - origin) + b over pairs produced by `get(i)`, with
/// the slope clamped to >= 0.
template <typename GetY>
LinearModel fit_linear(std::span<const Key> xs, GetY&& get_y) {
  LinearModel m;
  const std::size_t n = xs.size();
  if (n == 0) return m;
  m.origin = xs[0];
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += static_cast<double>(xs[i] - m.origin);
    sy += get_y(i);
  }
  const double xbar = sx / static_cast<double>(n);
  const double ybar = sy / static_cast<double>(n);
  double cov = 0, var = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(xs[i] - m.origin) - xbar;
    cov += dx * (get_y(i) - ybar);
    var += dx * dx;
  }
  if (var > 0.0) m.slope = cov / var;
  if (m.slope < 0.0) m.slope = 0.0;
  m.intercept = ybar - m.slope * xbar;
  return m;
}

}  // namespace detail

/// Fits the (pivot -> S-Bucket index) model for a segment.
inline LinearModel fit_segment_model(std::span<const Key> pivots,
                                     std::span<const std::uint32_t> sbucket_of) {
  return detail::fit_linear(pivots, [&](std::size_t i) {
    return static_cast<double>(sbucket_of[i]);
  });
}

/// Mean absolute rank-prediction error of a least-squares fit on (key, rank),
/// divided by the group size. By construction the result scales as 1/n.
inline double avg_group_error(std::span<const Key> keys, std::size_t group_size) {
  const std::size_t n = keys.size();
  if (n == 0) return 0.0;
  const LinearModel m = detail::fit_linear(keys, [](std::size_t i) {
    return static_cast<double>(i);
  });
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += std::abs(m.predict(keys[i]) - static_cast<double>(i));
  }
  return sum / static_cast<double>(n) / static_cast<double>(group_size);
}

}  // namespace bki
