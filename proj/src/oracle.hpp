#pragma once

#include "types.hpp"

namespace hexplan {

struct OracleLimits {
  int max_devices = 6;
  std::int64_t max_layers = 16;
};

struct OracleOutcome {
  ScheduleResult result;
  // leaves of the enumeration tree: set partitions x stage compositions x
  // layer compositions x micro-batch candidates x batch splits
  unsigned long long enumerated = 0;
};

// Exhaustive ground truth for small instances. Ties broken by the
// lexicographically smallest canonical plan encoding. count_only skips the
// cost evaluation and just sizes the tree.
OracleOutcome brute_force_schedule(const ClusterSpec& c, const ModelSpec& m,
                                   const SchedulerConfig& cfg,
                                   OracleLimits limits = {},
                                   bool count_only = false);

// canonical textual encoding used for tie-breaks (also handy in tests)
std::string plan_key(const ExecutionPlan& plan);

}  // namespace hexplan
