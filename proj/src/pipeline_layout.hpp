#pragma once

#include <cstdint>
#include <vector>

#include "graph_partition.hpp"
#include "types.hpp"

namespace hexplan {

// stage skeletons (no layers yet) for one secondary group
struct IntraGroupStrategy {
  std::vector<StagePlan> stages;
  int source_group = -1;
};

// min-cut split of one pipeline's devices into k_i stage groups
Partition secondary_partition(const std::vector<int>& group, int k_i,
                              const ClusterSpec& c, std::uint64_t seed,
                              double balance_cap = 1.2);

// per machine: pick the tp degree (a divisor of that machine's share) with the
// best per-layer time; one-layer memory fit is pre-checked, ties go to the
// lower degree
IntraGroupStrategy intra_group_strategy(const std::vector<int>& stage_group,
                                        const ModelSpec& m, const ClusterSpec& c,
                                        std::int64_t micro_batch,
                                        double state_multiplier = 1.0);

// top-tau greedy ordering over strategies; stages inside one strategy keep
// their order. Identity order always competes, so the result never loses to it.
std::vector<StagePlan> order_stages_greedy(
    const std::vector<IntraGroupStrategy>& strategies, int tau,
    const ModelSpec& m, const ClusterSpec& c, std::int64_t micro_batch,
    std::vector<int>* chosen_order = nullptr);

// proportional largest-remainder split refined by adjacent single-layer moves;
// writes layer ranges into `stages` and returns the per-stage counts
std::vector<int> assign_layers(std::vector<StagePlan>& stages, std::int64_t L,
                               const ModelSpec& m, const ClusterSpec& c,
                               std::int64_t micro_batch,
                               std::int64_t num_micro_batches,
                               double state_multiplier = 1.0);

// hill-climb only, from caller-provided counts (shared with the symmetric
// baseline's fine-tune step)
void refine_layers(std::vector<StagePlan>& stages, std::vector<int>& counts,
                   const ModelSpec& m, const ClusterSpec& c,
                   std::int64_t micro_batch, std::int64_t num_micro_batches,
                   double state_multiplier = 1.0);

PipelinePlan build_pipeline(const std::vector<int>& group, int k_i, int tau,
                            std::int64_t batch, std::int64_t micro_batch,
                            const ModelSpec& m, const ClusterSpec& c,
                            std::uint64_t seed, double balance_cap = 1.2,
                            double state_multiplier = 1.0);

}  // namespace hexplan
