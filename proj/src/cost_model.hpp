#pragma once

#include "types.hpp"

namespace hexplan {

// Analytic per-iteration cost model. All times in seconds, sizes in bytes.
//
// Per-layer allreduce/activation terms follow the usual ring-collective
// accounting: an allreduce over r peers moves ~2x the payload with each peer
// handling a 1/r slice, and latency is paid per peer.

// activation payload for one micro-batch crossing a layer boundary
double activation_bytes(const ModelSpec& m, std::int64_t micro_batch);

// tensor-parallel allreduce time for one layer of a stage; 0 when tp == 1
double comm_tp_layer(const StagePlan& st, std::int64_t micro_batch,
                     const ModelSpec& m, const ClusterSpec& c);

// gradient sync time for one layer's DP group; 0 for singleton groups
double comm_dp_layer(const DpGroup& g, const ModelSpec& m, const ClusterSpec& c);

// activation transfer between consecutive stages (send + scatter, x2 for
// forward and backward); callers pass stages in pipeline order
double comm_pp_hop(const StagePlan& from, const StagePlan& to,
                   std::int64_t micro_batch, const ModelSpec& m,
                   const ClusterSpec& c);

// fwd+bwd compute for one layer of a stage, sharded tp ways; throws
// InvalidArgument on a mixed-type stage
double comp_tp_layer(const StagePlan& st, std::int64_t micro_batch,
                     const ModelSpec& m, const ClusterSpec& c);

// layer_count * (comp + tp comm) for one micro-batch through the stage
double stage_time(const StagePlan& st, std::int64_t micro_batch,
                  const ModelSpec& m, const ClusterSpec& c);

// fill-drain plus steady-state bottleneck; +inf when micro batching is unset
double pipeline_time(const PipelinePlan& p, const ModelSpec& m,
                     const ClusterSpec& c);

// worst per-stage sum of layer gradient syncs across the whole plan
double comm_dp(const ExecutionPlan& plan, const ModelSpec& m,
               const ClusterSpec& c);

// bytes per device: layer_count * (params/tp + activations) * multiplier
MemoryReport mem_check(const ExecutionPlan& plan, const ModelSpec& m,
                       const ClusterSpec& c, double state_multiplier = 1.0);

// fills dp_groups from the pipelines (first device of the hosting stage)
void build_dp_groups(ExecutionPlan& plan, const ModelSpec& m);

// throws InvalidArgument when the plan breaks a structural invariant
void validate_plan(const ExecutionPlan& plan, const ModelSpec& m,
                   const ClusterSpec& c);

// full evaluation: per-pipeline times, dp sync, memory, breakdown, mfu
CostReport iteration_time(const ExecutionPlan& plan, const ModelSpec& m,
                          const ClusterSpec& c, double state_multiplier = 1.0);

// useful-FLOP throughput over aggregate peak, using every device in the
// cluster whether or not the plan occupies it
double model_flops_utilization(double iteration_seconds, std::int64_t global_batch,
                               const ModelSpec& m, const ClusterSpec& c);

}  // namespace hexplan
