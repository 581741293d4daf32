#include <doctest.h>

#include <bki/hints.hpp>

#include <bit>
#include <cmath>
#include <random>
#include <vector>

using namespace bki;

TEST_CASE("mod hint is plain modulo") {
  CHECK(mod_hint(2333, 4) == 1);
  CHECK(mod_hint(0, 7) == 0);
  CHECK(mod_hint(~0ull, 2) == 1);
  for (Key k = 0; k < 100; ++k) CHECK(mod_hint(k, 16) == k % 16);
}

TEST_CASE("hints always land inside the bucket") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const Key k = rng();
    for (std::uint32_t slots : {2u, 3u, 16u, 256u, 1000u}) {
      CHECK(mod_hint(k, slots) < slots);
      CHECK(clmul_hint(k, slots) < slots);
      CHECK(endpoint_linear_hint(k, 100, 1000000, slots) < slots);
    }
  }
}

TEST_CASE("mix64 avalanche: flipping any input bit flips ~half the output") {
  std::mt19937_64 rng(2);
  for (int bit = 0; bit < 64; ++bit) {
    std::uint64_t flipped = 0, trials = 0;
    for (int t = 0; t < 400; ++t) {
      const std::uint64_t x = rng();
      flipped += std::popcount(mix64(x) ^ mix64(x ^ (1ull << bit)));
      trials += 64;
    }
    const double frac = static_cast<double>(flipped) / static_cast<double>(trials);
    CHECK(frac > 0.45);
    CHECK(frac < 0.55);
  }
}

TEST_CASE("clmul hint spreads sequential keys roughly uniformly") {
  const std::uint32_t slots = 64;
  std::vector<std::uint32_t> hist(slots, 0);
  const int n = 64000;
  for (int i = 0; i < n; ++i) ++hist[clmul_hint(static_cast<Key>(i), slots)];
  const double expected = static_cast<double>(n) / slots;
  double chi2 = 0;
  for (auto h : hist) {
    const double d = h - expected;
    chi2 += d * d / expected;
  }
  // 63 dof; 1e-4 quantile is ~115. Sequential keys must not collapse.
  CHECK(chi2 < 115.0);
}

TEST_CASE("endpoint hint is monotone and hits both ends") {
  const Key lo = 1000, hi = 2000;
  const std::uint32_t slots = 10;
  CHECK(endpoint_linear_hint(lo, lo, hi, slots) == 0);
  CHECK(endpoint_linear_hint(999, lo, hi, slots) == 0);
  CHECK(endpoint_linear_hint(hi, lo, hi, slots) == slots - 1);
  CHECK(endpoint_linear_hint(1999, lo, hi, slots) == slots - 1);
  std::uint32_t prev = 0;
  for (Key k = lo; k < hi; ++k) {
    const std::uint32_t s = endpoint_linear_hint(k, lo, hi, slots);
    CHECK(s >= prev);
    prev = s;
  }
  // floor(slots * (k - lo) / (hi - lo)) exactly
  CHECK(endpoint_linear_hint(1100, lo, hi, slots) == 1);
  CHECK(endpoint_linear_hint(1550, lo, hi, slots) == 5);
}

TEST_CASE("endpoint hint survives degenerate and extreme ranges") {
  CHECK(endpoint_linear_hint(5, 5, 5, 8) == 0);    // empty range
  CHECK(endpoint_linear_hint(9, 10, 5, 8) == 0);   // inverted range
  const Key lo = 0, hi = ~0ull;
  for (std::uint32_t slots : {2u, 256u}) {
    CHECK(endpoint_linear_hint(hi - 1, lo, hi, slots) == slots - 1);
    CHECK(endpoint_linear_hint(hi / 2, lo, hi, slots) < slots);
  }
}
