#pragma once

#include <string>
#include <vector>

#include "types.hpp"

namespace hexplan {

// Parses the cluster document, expands the pairwise link matrices and
// validates. Throws ParseError on malformed input. Non-fatal oddities
// (e.g. intra-machine link slower than inter) land in *warnings.
ClusterSpec parse_cluster(const std::string& text,
                          std::vector<std::string>* warnings = nullptr);

ModelSpec parse_model(const std::string& text);

// Canonical serializations; parse(serialize(x)) reproduces x.
std::string serialize_cluster(const ClusterSpec& c);
std::string serialize_model(const ModelSpec& m);

// Scheduler config as JSON (used by the C API and CLI). Unknown keys are an
// error; missing keys keep defaults from `base`.
SchedulerConfig parse_scheduler_config(const std::string& text,
                                       const SchedulerConfig& base = {});
std::string serialize_scheduler_config(const SchedulerConfig& cfg);

std::string read_file(const std::string& path);

}  // namespace hexplan
