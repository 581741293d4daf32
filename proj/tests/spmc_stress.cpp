// Single-writer / multi-reader stress: run under a race detector as well as
// plain. Exit 0 iff no property violation:
//   (a) a key published before a probe begins is always found,
//   (b) found values are exactly what the writer wrote,
//   (c) once a reader has seen a key, later probes keep seeing it,
//   (d) scans return sorted, non-fabricated pairs.
#include <bki/bki.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <thread>
#include <vector>

using namespace bki;

namespace {

Key key_of(std::uint64_t i) { return mix64(i + 1); }  // bijective -> unique
Value value_of(Key k) { return k ^ 0x1234abcd5678ull; }

constexpr std::size_t kTracked = 10000;

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t n_inserts = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 200000;
  const unsigned n_readers = argc > 2 ? static_cast<unsigned>(std::atoi(argv[2])) : 7;

  BucketIndex index;
  std::atomic<std::uint64_t> published{0};
  std::atomic<bool> done{false};
  std::atomic<std::uint64_t> violations{0};
  std::atomic<std::uint64_t> probes_total{0};

  std::thread writer([&] {
    for (std::uint64_t i = 0; i < n_inserts; ++i) {
      const Key k = key_of(i);
      index.insert(k, value_of(k));
      published.store(i + 1, std::memory_order_release);
    }
    done.store(true, std::memory_order_release);
  });

  std::vector<std::thread> readers;
  for (unsigned r = 0; r < n_readers; ++r) {
    readers.emplace_back([&, r] {
      std::mt19937_64 rng(1000 + r);
      std::vector<std::uint64_t> seen;
      seen.reserve(kTracked);
      std::uint64_t probes = 0;
      while (!done.load(std::memory_order_acquire) || probes < 50000) {
        const std::uint64_t p = published.load(std::memory_order_acquire);
        if (p == 0) continue;
        ++probes;
        const std::uint64_t i = rng() % p;
        const Key k = key_of(i);
        const auto v = index.lookup(k);
        if (!v) {
          std::fprintf(stderr, "reader %u: published key %llu (i=%llu) missing\n", r,
                       (unsigned long long)k, (unsigned long long)i);
          violations.fetch_add(1);
        } else if (*v != value_of(k)) {
          std::fprintf(stderr, "reader %u: fabricated value for key %llu\n", r,
                       (unsigned long long)k);
          violations.fetch_add(1);
        } else if (seen.size() < kTracked) {
          seen.push_back(i);
        }
        // Monotonic visibility: re-probe something this reader already saw.
        if (!seen.empty() && probes % 8 == 0) {
          const std::uint64_t j = seen[rng() % seen.size()];
          const Key k2 = key_of(j);
          const auto v2 = index.lookup(k2);
          if (!v2 || *v2 != value_of(k2)) {
            std::fprintf(stderr, "reader %u: key %llu vanished after being seen\n", r,
                         (unsigned long long)k2);
            violations.fetch_add(1);
          }
        }
        if (probes % 512 == 0) {
          const auto scan = index.range_query(rng(), 32);
          for (std::size_t s = 0; s < scan.size(); ++s) {
            if (scan[s].second != value_of(scan[s].first) ||
                (s > 0 && scan[s - 1].first >= scan[s].first)) {
              std::fprintf(stderr, "reader %u: bad scan pair\n", r);
              violations.fetch_add(1);
            }
          }
        }
      }
      probes_total.fetch_add(probes);
    });
  }

  writer.join();
  for (auto& t : readers) t.join();
  index.check_invariants();

  std::printf("inserts=%llu readers=%u probes=%llu violations=%llu retired=%llu reclaimed=%llu\n",
              (unsigned long long)n_inserts, n_readers,
              (unsigned long long)probes_total.load(),
              (unsigned long long)violations.load(),
              (unsigned long long)index.epochs().total_retired(),
              (unsigned long long)index.epochs().total_reclaimed());
  return violations.load() == 0 ? 0 : 1;
}
