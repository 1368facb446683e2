#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "device_graph.hpp"

namespace hexplan {

enum class CutObjective { Min, Max };

struct Partition {
  // original vertex ids; members sorted, groups ordered by first member
  std::vector<std::vector<int>> groups;
  double cap_used = 1.0;  // balance cap in force after any relaxation
};

// total crossing bandwidth between distinct groups
double cut_value(const DeviceGraph& g, const std::vector<std::vector<int>>& groups);

// max group weight over the per-group average; 1.0 = perfectly balanced
double balance_factor(const DeviceGraph& g, const std::vector<std::vector<int>>& groups);

// one coarsening level; vertex i of `g` merges `from[i]` of the finer level
struct CoarseLevel {
  DeviceGraph g;  // verts are local 0..n-1 at this level
  std::vector<std::array<int, 2>> from;  // second entry -1 for singletons
};

// heavy-edge matching ladder; level 0 is the (relabelled) input graph
std::vector<CoarseLevel> coarsen(const DeviceGraph& g, int k, std::uint64_t seed);

// recursive bisection on the coarsest level; throws when no split satisfies
// the cap (caller relaxes and retries). avg_target = total weight / k.
std::vector<std::vector<int>> initial_partition(const DeviceGraph& coarsest, int k,
                                                CutObjective obj, double cap,
                                                double avg_target);

// full multilevel pipeline: coarsen, bisect, project with pairwise-swap
// refinement, relaxing the cap x1.1 up to x2 before giving up
Partition partition_graph(const DeviceGraph& g, int k, CutObjective obj,
                          double balance_cap, std::uint64_t seed);

// seeded random cap-respecting split (ablation baseline)
Partition random_partition(const DeviceGraph& g, int k, double balance_cap,
                           std::uint64_t seed);

}  // namespace hexplan
