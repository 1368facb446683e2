#pragma once

#include <string>
#include <utility>
#include <vector>

#include "types.hpp"

namespace hexplan {

// provenance block written next to every saved artifact
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> input_digests;  // (path, fnv64 hex)
  std::uint64_t seed = 0;
  std::string config_json;
  std::string version;
  double runtime_ms = 0;
};

std::string artifact_version();

// all serializers emit deterministic key order so artifacts diff cleanly
std::string serialize_plan(const ExecutionPlan& plan, const ClusterSpec& c);
std::string serialize_report(const CostReport& report, const ClusterSpec& c);
std::string serialize_trace(const std::vector<IterationTrace>& trace);
// runtime_ms is intentionally dropped when the manifest is embedded in
// another artifact, so re-runs of the same inputs produce identical bytes
std::string serialize_manifest(const RunManifest& man, bool embedded);

// fixed-width summary table, one stage per row plus totals
std::string render_table(const ExecutionPlan& plan, const CostReport& report,
                         const ClusterSpec& c, const ModelSpec& m);

}  // namespace hexplan
