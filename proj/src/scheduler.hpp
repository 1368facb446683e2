#pragma once

#include "graph_partition.hpp"
#include "types.hpp"

namespace hexplan {

struct SearchState {
  bool has_best = false;
  ExecutionPlan best_plan;
  CostReport best_report;
  int best_d_dp = 0;
  double ema_pipeline = 0;
  double ema_dp = 0;
  bool ema_ready = false;
  int iteration = 0;
};

// min when pipelines dominate the historical cost, max when gradient sync
// does; alternates before any evaluation lands
CutObjective choose_cut_objective(const SearchState& st);

// throughput-proportional micro-batch split refined by single-unit moves from
// the slowest to the fastest pipeline; sets batch on each pipeline
std::vector<std::int64_t> assign_batches(std::vector<PipelinePlan>& pipelines,
                                         std::int64_t global_batch,
                                         const ModelSpec& m, const ClusterSpec& c);

ScheduleResult schedule(const ClusterSpec& c, const ModelSpec& m,
                        const SchedulerConfig& cfg);

// best (D_dp, D_tp, D_pp) grid plan: canonical consecutive tp blocks, uniform
// batches, uniform layers fine-tuned by the shared hill-climb
ScheduleResult symmetric_baseline(const ClusterSpec& c, const ModelSpec& m,
                                  const SchedulerConfig& cfg);

}  // namespace hexplan
