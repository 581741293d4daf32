// Benchmark and verification front end. Exit codes: 0 success, 1 verification
// failure, 2 usage error.
#include <CLI11.hpp>

#include <bki/bki.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

using namespace bki;
using Clock = std::chrono::steady_clock;

namespace {

struct CommonOpts {
  std::string keyset_path;
  std::string synthetic = "uniform";
  std::size_t bulk = 1000000;
  std::size_t ops = 1000000;
  std::string ratio = "1:1";
  unsigned threads = 1;
  std::uint32_t dbucket = 256;
  std::uint32_t sbucket = 16;
  double fill = 0.6;
  double corridor_error = 32.0;
  std::uint32_t theta = 3;
  std::string hint = "clmul";
  std::uint64_t seed = 1;
  std::string report = "json";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--keyset", o.keyset_path, "binary keyset file (count + keys, 8B LE)");
  cmd->add_option("--synthetic", o.synthetic, "uniform|lognormal|piecewise")
      ->check(CLI::IsMember({"uniform", "lognormal", "piecewise"}));
  cmd->add_option("--bulk", o.bulk, "keys to bulk load");
  cmd->add_option("--ops", o.ops, "operations to run");
  cmd->add_option("--ratio", o.ratio, "read:write ratio, e.g. 1:9");
  cmd->add_option("--threads", o.threads, "total threads (1 writer + T-1 readers)")
      ->check(CLI::Range(1u, 64u));
  cmd->add_option("--dbucket", o.dbucket, "D-Bucket capacity");
  cmd->add_option("--sbucket", o.sbucket, "S-Bucket capacity");
  cmd->add_option("--fill", o.fill, "initial fill ratio");
  cmd->add_option("--corridor-error", o.corridor_error, "segmentation error bound");
  cmd->add_option("--theta", o.theta, "merge threshold");
  cmd->add_option("--hint", o.hint, "mod|clmul|endpoint")
      ->check(CLI::IsMember({"mod", "clmul", "endpoint"}));
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--report", o.report, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}));
}

IndexConfig config_of(const CommonOpts& o, bool breakdown = false) {
  IndexConfig cfg;
  cfg.dbucket_capacity = o.dbucket;
  cfg.sbucket_capacity = o.sbucket;
  cfg.initial_fill_ratio = o.fill;
  cfg.corridor_error = o.corridor_error;
  cfg.merge_threshold = o.theta;
  cfg.hint_kind = hint_kind_from_string(o.hint);
  cfg.collect_breakdown = breakdown;
  cfg.validate();
  return cfg;
}

std::pair<unsigned, unsigned> parse_ratio(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--ratio", "expected R:W");
  const int r = std::stoi(s.substr(0, colon));
  const int w = std::stoi(s.substr(colon + 1));
  if (r < 0 || w < 0 || r + w == 0) throw CLI::ValidationError("--ratio", "bad ratio");
  return {static_cast<unsigned>(r), static_cast<unsigned>(w)};
}

std::vector<Key> keys_for(const CommonOpts& o) {
  std::vector<Key> keys;
  if (!o.keyset_path.empty()) {
    keys = load_keyset(o.keyset_path);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    if (keys.size() > o.bulk) keys.resize(o.bulk);
  } else {
    keys = gen_synthetic(synthetic_kind_from_string(o.synthetic), o.bulk, o.seed);
  }
  return keys;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void emit(const CommonOpts& o, const MetricsReport& r, double throughput) {
  if (o.report == "json") {
    auto j = to_json(r);
    j["throughput_ops_per_sec"] = throughput;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << kReportCsvHeader << ",throughput_ops_per_sec\n";
    std::ostringstream row;
    write_csv_row(row, r);
    std::string line = row.str();
    line.pop_back();  // trailing newline
    std::cout << line << ',' << throughput << "\n";
  }
}

int cmd_bench(const CommonOpts& o) {
  const auto keys = keys_for(o);
  std::vector<std::pair<Key, Value>> bulk;
  bulk.reserve(keys.size());
  for (Key k : keys) bulk.emplace_back(k, k ^ 0xb0b);
  BucketIndex idx(config_of(o, true));
  idx.bulk_load(bulk);

  const auto [r, w] = parse_ratio(o.ratio);
  auto trace = make_workload(keys, o.ops, r, w, o.seed, /*with_scans=*/false);

  // Writes stay on the single writer thread; reads are dealt evenly to the
  // T-1 reader threads (T == 1 runs everything inline).
  std::vector<Op> writes;
  std::vector<Op> reads;
  for (const auto& op : trace.ops)
    (op.type == Op::Type::Insert ? writes : reads).push_back(op);

  const unsigned n_readers = o.threads > 1 ? o.threads - 1 : 0;
  const auto t0 = Clock::now();
  if (n_readers == 0) {
    for (const auto& op : trace.ops) {
      if (op.type == Op::Type::Insert) idx.insert(op.key, op.value);
      else idx.lookup(op.key);
    }
  } else {
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < n_readers; ++t) {
      threads.emplace_back([&, t] {
        for (std::size_t i = t; i < reads.size(); i += n_readers)
          idx.lookup(reads[i].key);
      });
    }
    for (const auto& op : writes) idx.insert(op.key, op.value);
    for (auto& t : threads) t.join();
  }
  const double elapsed = seconds_since(t0);
  const double throughput = static_cast<double>(trace.ops.size()) / elapsed;

  const auto& instr = idx.instrumentation();
  const auto lookups = instr.lookups.load();
  const auto inserts = instr.inserts.load();
  std::optional<double> e_lookup, e_insert;
  if (lookups) {
    e_lookup = static_cast<double>(lookups) /
               bki::detail::ticks_to_seconds(instr.segment_lookup_ticks.load() +
                                             instr.dbucket_lookup_ticks.load());
  }
  if (inserts) {
    e_insert = static_cast<double>(inserts) /
               bki::detail::ticks_to_seconds(instr.insert_ticks.load() +
                                             instr.mem_mgmt_ticks.load());
  }
  const auto report =
      collect_report(idx, idx.size() * (sizeof(Key) + sizeof(Value)), e_lookup, e_insert);
  emit(o, report, throughput);
  return 0;
}

int cmd_sweep(const CommonOpts& o) {
  const auto [r, w] = parse_ratio(o.ratio);
  std::cout << "dbucket,sbucket,fill,throughput_ops_per_sec,o_mem\n";
  for (std::uint32_t cd : {64u, 128u, 256u, 512u}) {
    for (std::uint32_t cs : {8u, 16u, 32u}) {
      for (double f : {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
        CommonOpts local = o;
        local.dbucket = cd;
        local.sbucket = cs;
        local.fill = f;
        const auto keys = keys_for(local);
        std::vector<std::pair<Key, Value>> bulk;
        for (Key k : keys) bulk.emplace_back(k, 1);
        BucketIndex idx(config_of(local));
        idx.bulk_load(bulk);
        auto trace = make_workload(keys, o.ops, r, w, o.seed, false);
        const auto t0 = Clock::now();
        for (const auto& op : trace.ops) {
          if (op.type == Op::Type::Insert) idx.insert(op.key, op.value);
          else idx.lookup(op.key);
        }
        const double tput = static_cast<double>(trace.ops.size()) / seconds_since(t0);
        const double o_mem =
            compute_o_mem(idx, idx.size() * (sizeof(Key) + sizeof(Value)));
        std::cout << cd << ',' << cs << ',' << f << ',' << tput << ',' << o_mem << "\n";
      }
    }
  }
  return 0;
}

int cmd_errcurve(const CommonOpts& o) {
  const auto keys = keys_for(o);
  std::cout << "group_size,avg_error\n";
  for (std::size_t n = 1; n <= 256; n *= 2)
    std::cout << n << ',' << avg_group_error(keys, n) << "\n";
  return 0;
}

int cmd_verify(const CommonOpts& o) {
  const auto keys = keys_for(o);
  std::vector<std::pair<Key, Value>> bulk;
  for (Key k : keys) bulk.emplace_back(k, k);
  const auto [r, w] = parse_ratio(o.ratio);
  const auto trace = make_workload(keys, o.ops, r, w, o.seed);
  const auto res = differential_check(trace, config_of(o), bulk);
  if (!res.ok) {
    std::cerr << "divergence at op " << res.op_index << ": expected " << res.expected
              << ", got " << res.actual << "\n";
    return 1;
  }
  std::cout << "ok: " << trace.ops.size() << " ops, zero divergences\n";
  return 0;
}

int cmd_breakdown(const CommonOpts& o) {
  const auto keys = keys_for(o);
  std::vector<std::pair<Key, Value>> bulk;
  for (Key k : keys) bulk.emplace_back(k, 1);
  BucketIndex idx(config_of(o, true));
  idx.bulk_load(bulk);
  const auto [r, w] = parse_ratio(o.ratio);
  auto trace = make_workload(keys, o.ops, r, w, o.seed, false);
  for (const auto& op : trace.ops) {
    if (op.type == Op::Type::Insert) idx.insert(op.key, op.value);
    else idx.lookup(op.key);
  }
  const Breakdown b = time_breakdown(idx.instrumentation());
  std::printf("class,scope,percent\n");
  std::printf("get,segment_lookup,%.2f\n", b.segment_lookup_pct);
  std::printf("get,dbucket_lookup,%.2f\n", b.dbucket_lookup_pct);
  std::printf("put,insert,%.2f\n", b.insert_pct);
  std::printf("put,memory_management,%.2f\n", b.mem_mgmt_pct);
  return 0;
}

int cmd_bulkload_bench(const CommonOpts& o) {
  const auto keys = keys_for(o);
  std::vector<std::pair<Key, Value>> pairs;
  pairs.reserve(keys.size());
  for (Key k : keys) pairs.emplace_back(k, 1);
  BucketIndex bulked(config_of(o));
  auto t0 = Clock::now();
  bulked.bulk_load(pairs);
  const double t_bulk = seconds_since(t0);
  BucketIndex looped(config_of(o));
  t0 = Clock::now();
  for (const auto& [k, v] : pairs) looped.insert(k, v);
  const double t_loop = seconds_since(t0);
  const double n = static_cast<double>(pairs.size());
  std::cout << "method,keys,seconds,m_ops_per_sec\n";
  std::cout << "bulk_load," << pairs.size() << ',' << t_bulk << ','
            << n / t_bulk / 1e6 << "\n";
  std::cout << "insert_loop," << pairs.size() << ',' << t_loop << ','
            << n / t_loop / 1e6 << "\n";
  return 0;
}

int cmd_genkeys(const CommonOpts& o, const std::string& out) {
  save_keyset(keys_for(o), out);
  std::cout << "wrote " << o.bulk << " keys to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bucket-index benchmark and verification tool"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string genkeys_out;
  auto* bench = app.add_subcommand("bench", "bulk load, run a mixed workload, report");
  auto* sweep = app.add_subcommand("sweep", "sweep dbucket/sbucket/fill, CSV out");
  auto* errcurve = app.add_subcommand("errcurve", "avg model error vs group size");
  auto* verify = app.add_subcommand("verify", "differential check vs ordered map");
  auto* breakdown = app.add_subcommand("breakdown", "wall-time attribution table");
  auto* bulkload = app.add_subcommand("bulkload-bench", "bulk load vs insert loop");
  auto* genkeys = app.add_subcommand("genkeys", "write a synthetic keyset file");
  for (auto* cmd : {bench, sweep, errcurve, verify, breakdown, bulkload, genkeys})
    add_common(cmd, o);
  genkeys->add_option("--out", genkeys_out, "output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (bench->parsed()) return cmd_bench(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (errcurve->parsed()) return cmd_errcurve(o);
    if (verify->parsed()) return cmd_verify(o);
    if (breakdown->parsed()) return cmd_breakdown(o);
    if (bulkload->parsed()) return cmd_bulkload_bench(o);
    if (genkeys->parsed()) return cmd_genkeys(o, genkeys_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
