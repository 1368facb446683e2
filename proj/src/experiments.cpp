#include "experiments.hpp"

#include <chrono>

#include "scheduler.hpp"
#include "synth.hpp"
#include "util.hpp"

namespace hexplan {

std::vector<RandomBaselineRun> random_baseline(const ClusterSpec& c,
                                               const ModelSpec& m,
                                               const SchedulerConfig& cfg,
                                               int runs) {
  std::vector<RandomBaselineRun> out;
  for (int r = 0; r < runs; ++r) {
    SchedulerConfig real_cfg = cfg;
    real_cfg.seed = mix_seed(cfg.seed, std::uint64_t(r), 0x7ea1);
    real_cfg.random_partition = false;
    SchedulerConfig rnd_cfg = real_cfg;
    rnd_cfg.random_partition = true;

    RandomBaselineRun row;
    ScheduleResult real = schedule(c, m, real_cfg);
    ScheduleResult rnd = schedule(c, m, rnd_cfg);
    row.real = real.trace;
    row.random = rnd.trace;
    row.real_final_mfu = real.found ? real.report.mfu : 0;
    row.random_final_mfu = rnd.found ? rnd.report.mfu : 0;
    row.real_infeasible = real.candidates_infeasible;
    row.random_infeasible = rnd.candidates_infeasible;
    out.push_back(std::move(row));
  }
  return out;
}

ClusterSpec scale_inter_bandwidth(const ClusterSpec& c, double factor) {
  ClusterSpec out = c;
  out.inter_bandwidth *= factor;
  for (auto& o : out.overrides) {
    int a = c.device_index(o.a), b = c.device_index(o.b);
    if (c.devices[a].machine != c.devices[b].machine) o.bandwidth *= factor;
  }
  for (size_t a = 0; a < c.devices.size(); ++a)
    for (size_t b = 0; b < c.devices.size(); ++b)
      if (c.devices[a].machine != c.devices[b].machine)
        out.bandwidth[a][b] = c.bandwidth[a][b] * factor;
  return out;
}

std::vector<SweepRow> bandwidth_sweep(const ClusterSpec& c, const ModelSpec& m,
                                      const SchedulerConfig& cfg,
                                      const std::vector<double>& scales) {
  std::vector<SweepRow> out;
  for (double s : scales) {
    ClusterSpec scaled = scale_inter_bandwidth(c, s);
    ScheduleResult res = schedule(scaled, m, cfg);
    SweepRow row;
    row.scale = s;
    row.feasible = res.found;
    row.cost = res.found ? res.report.total : kInf;
    row.mfu = res.found ? res.report.mfu : 0;
    double prev_best = kInf;
    for (const auto& tr : res.trace) {
      if (tr.objective == 'n') ++row.min_choices;
      else ++row.max_choices;
      if (tr.best_cost < prev_best) {
        prev_best = tr.best_cost;
        row.best_objective = tr.objective;
      }
    }
    out.push_back(row);
  }
  return out;
}

std::vector<ScaleRow> scale_bench(const std::vector<int>& sizes,
                                  const ModelSpec& m, const SchedulerConfig& cfg) {
  std::vector<ScaleRow> out;
  for (int n : sizes) {
    ClusterSpec c = generate_synthetic_cluster(n, cfg.seed);
    auto t0 = std::chrono::steady_clock::now();
    ScheduleResult res = schedule(c, m, cfg);
    auto t1 = std::chrono::steady_clock::now();
    ScaleRow row;
    row.num_gpus = n;
    row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    row.feasible = res.found;
    row.cost = res.found ? res.report.total : kInf;
    row.mfu = res.found ? res.report.mfu : 0;
    out.push_back(row);
  }
  return out;
}

}  // namespace hexplan
