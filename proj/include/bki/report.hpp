#pragma once

#include <ostream>
#include <string>

#include <json.hpp>

#include "bki/metrics.hpp"

namespace bki {

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["levels"] = r.level_node_counts;
  j["mean_fanout_per_level"] = r.mean_fanout_per_level;
  if (r.e_lookup) j["e_lookup_ops_per_sec"] = *r.e_lookup;
  if (r.e_insert) j["e_insert_ops_per_sec"] = *r.e_insert;
  j["o_mem"] = r.o_mem;
  j["breakdown"] = {{"segment_lookup_pct", r.breakdown.segment_lookup_pct},
                    {"dbucket_lookup_pct", r.breakdown.dbucket_lookup_pct},
                    {"insert_pct", r.breakdown.insert_pct},
                    {"mem_mgmt_pct", r.breakdown.mem_mgmt_pct}};
  j["probe_histogram"] = r.probe_histogram;
  j["smo"] = {{"dbucket_splits", r.dbucket_splits},
              {"resegments", r.resegments},
              {"merges", r.merges},
              {"shifts_performed", r.shifts_performed}};
  return j;
}

/// Stable CSV schema: one row per report.
inline constexpr const char* kReportCsvHeader =
    "e_lookup_ops_per_sec,e_insert_ops_per_sec,o_mem,height,"
    "segment_lookup_pct,dbucket_lookup_pct,insert_pct,mem_mgmt_pct,"
    "dbucket_splits,resegments,merges,shifts_performed";

inline void write_csv_row(std::ostream& os, const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string();
  };
  os << opt(r.e_lookup) << ',' << opt(r.e_insert) << ',' << r.o_mem << ','
     << r.level_node_counts.size() << ',' << r.breakdown.segment_lookup_pct << ','
     << r.breakdown.dbucket_lookup_pct << ',' << r.breakdown.insert_pct << ','
     << r.breakdown.mem_mgmt_pct << ',' << r.dbucket_splits << ',' << r.resegments
     << ',' << r.merges << ',' << r.shifts_performed << '\n';
}

}  // namespace bki
