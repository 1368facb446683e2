#pragma once

#include <cstdint>
#include <vector>

#include "types.hpp"

namespace hexplan {

struct RandomBaselineRun {
  std::vector<IterationTrace> real;
  std::vector<IterationTrace> random;
  double real_final_mfu = 0;
  double random_final_mfu = 0;
  int real_infeasible = 0;
  int random_infeasible = 0;
};

/// paired runs: the full scheduler vs the same loop with the partitioner
// swapped for seeded random balanced splits
std::vector<RandomBaselineRun> random_baseline(const ClusterSpec& c,
                                               const ModelSpec& m,
                                               const SchedulerConfig& cfg,
                                               int runs);

struct SweepRow {
  double scale = 1;
  bool feasible = false;
  double cost = 0;
  double mfu = 0;
  char best_objective = '-';  // objective of the iteration that won
  int min_choices = 0;        // how often each cut objective got picked
  int max_choices = 0;
};

// rescale every inter-machine bandwidth and re-run the search
std::vector<SweepRow> bandwidth_sweep(const ClusterSpec& c, const ModelSpec& m,
                                      const SchedulerConfig& cfg,
                                      const std::vector<double>& scales);

ClusterSpec scale_inter_bandwidth(const ClusterSpec& c, double factor);

struct ScaleRow {
  int num_gpus = 0;
  double wall_seconds = 0;
  bool feasible = false;
  double cost = 0;
  double mfu = 0;
};

std::vector<ScaleRow> scale_bench(const std::vector<int>& sizes,
                                  const ModelSpec& m, const SchedulerConfig& cfg);

}  // namespace hexplan
