#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace hexplan {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Device {
  std::string id;
  int machine = -1;         // index into ClusterSpec::machines
  double memory_bytes = 0;  // capacity m_d
  double peak_flops = 0;    // c_d in FLOP/s
};

struct MachineParams {
  std::string name;
  double intra_bandwidth = 0;  // B/s between devices of this machine
  double intra_latency = 0;    // seconds
};

struct LinkOverride {
  std::string a, b;      // device ids, unordered pair
  double bandwidth = 0;  // B/s
  double latency = 0;    // seconds
};

// Cluster with fully expanded pairwise link matrices. Device order is the
// document order and stays canonical through the whole pipeline.
struct ClusterSpec {
  std::vector<Device> devices;
  std::vector<MachineParams> machines;
  double inter_bandwidth = 0;
  double inter_latency = 0;
  std::vector<LinkOverride> overrides;

  // symmetric, diagonal untouched by the cost model
  std::vector<std::vector<double>> bandwidth;  // beta, B/s
  std::vector<std::vector<double>> latency;    // alpha, s

  int device_index(const std::string& id) const;
  int machine_index(const std::string& name) const;
  std::vector<std::vector<int>> devices_by_machine() const;
  double total_flops() const;
};

struct ModelSpec {
  std::int64_t num_layers = 0;
  std::int64_t hidden_dim = 0;
  std::int64_t seq_len = 0;
  std::int64_t bytes_per_element = 0;
};

// one tensor-parallel stage of a pipeline
struct StagePlan {
  std::vector<int> devices;  // cluster device indices
  int tp = 1;                // == devices.size()
  int layer_start = 0;
  int layer_count = 0;
};

struct PipelinePlan {
  std::vector<StagePlan> stages;
  std::int64_t batch = 0;        // samples this pipeline handles per iteration
  std::int64_t micro_batch = 0;  // B_mb

  std::int64_t num_micro_batches() const {
    return micro_batch > 0 ? batch / micro_batch : 0;
  }
};

// replicas of one layer across pipelines; gradients sync over these
struct DpGroup {
  int layer = 0;
  std::vector<int> members;  // one representative device per pipeline
};

struct ExecutionPlan {
  std::vector<PipelinePlan> pipelines;
  std::vector<DpGroup> dp_groups;  // one per layer
  std::int64_t global_batch = 0;
};

struct MemoryReport {
  std::vector<double> per_device;  // bytes, canonical device order, 0 = unused
  bool fits = true;
  double worst_overage = 0;  // bytes over budget on the worst offender
  int worst_device = -1;
};

struct CostReport {
  std::vector<double> per_pipeline;  // pipeline_time per pipeline
  double dp_comm = 0;
  // breakdown along the critical path; sums to total for feasible plans
  double compute = 0;
  double tp_comm = 0;
  double pp_comm = 0;
  double bubble = 0;
  double total = kInf;
  double mfu = 0;
  bool feasible = false;
  MemoryReport memory;
};

struct SchedulerConfig {
  std::int64_t global_batch = 1;
  std::vector<std::int64_t> micro_batch_candidates{1, 2, 4, 8};
  int tau = 2;
  double balance_cap = 1.2;
  int iterations = 50;
  double ema_decay = 0.5;
  std::uint64_t seed = 0;
  double state_multiplier = 1.0;
  int threads = 0;                // 0 = HEXPLAN_THREADS env or hardware count
  bool random_partition = false;  // swap the partitioner for seeded random splits
};

struct IterationTrace {
  int iteration = 0;
  int d_dp = 0;
  char objective = 'n';  // 'n' = min cut, 'x' = max cut
  double candidate_cost = kInf;
  double candidate_mfu = 0;
  double best_cost = kInf;
  double best_mfu = 0;
  double ema_pipeline = 0;
  double ema_dp = 0;
  bool feasible = false;
};

struct ScheduleResult {
  ExecutionPlan plan;
  CostReport report;
  bool found = false;
  std::string message;  // why, when !found
  std::vector<IterationTrace> trace;
  int candidates_total = 0;
  int candidates_infeasible = 0;
};

}  // namespace hexplan
