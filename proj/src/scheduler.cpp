#include "scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cost_model.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "pipeline_layout.hpp"
#include "util.hpp"

namespace hexplan {

CutObjective choose_cut_objective(const SearchState& st) {
  if (!st.ema_ready)
    return st.iteration % 2 == 0 ? CutObjective::Min : CutObjective::Max;
  return st.ema_pipeline > st.ema_dp ? CutObjective::Min : CutObjective::Max;
}

std::vector<std::int64_t> assign_batches(std::vector<PipelinePlan>& pipelines,
                                         std::int64_t global_batch,
                                         const ModelSpec& m, const ClusterSpec& c) {
  int D = int(pipelines.size());
  if (D == 0) throw InvalidArgument("no pipelines to assign batches to");
  std::int64_t mb = pipelines[0].micro_batch;
  for (const auto& p : pipelines)
    if (p.micro_batch != mb)
      throw InvalidArgument("micro batch size differs across pipelines");
  if (global_batch < std::int64_t(D) * mb)
    throw InvalidArgument("global batch too small");
  if (global_batch % mb != 0)
    throw InvalidArgument("global batch not a multiple of the micro batch");
  std::int64_t U = global_batch / mb;

  // fixed per-stage costs; time is affine in the micro-batch count
  std::vector<double> fill(D, 0.0), bott(D, 0.0);
  for (int i = 0; i < D; ++i) {
    const auto& stages = pipelines[i].stages;
    for (size_t j = 0; j < stages.size(); ++j) {
      double s = stage_time(stages[j], mb, m, c);
      double h = (j + 1 < stages.size())
                     ? comm_pp_hop(stages[j], stages[j + 1], mb, m, c)
                     : 0.0;
      fill[i] += s + h;
      bott[i] = std::max(bott[i], s + h);
    }
  }
  auto time_at = [&](int i, std::int64_t units) {
    return fill[i] + double(units - 1) * bott[i];
  };

  std::int64_t eq = std::max<std::int64_t>(1, U / D);
  std::vector<double> share(D);
  double speed_sum = 0;
  for (int i = 0; i < D; ++i) {
    share[i] = 1.0 / time_at(i, eq);
    speed_sum += share[i];
  }
  std::vector<std::int64_t> units(D);
  std::int64_t sum = 0;
  for (int i = 0; i < D; ++i) {
    share[i] = double(U) * share[i] / speed_sum;
    units[i] = std::max<std::int64_t>(1, std::int64_t(std::floor(share[i])));
    sum += units[i];
  }
  while (sum < U) {
    int pick = 0;
    for (int i = 1; i < D; ++i)
      if (share[i] - double(units[i]) > share[pick] - double(units[pick])) pick = i;
    ++units[pick];
    ++sum;
  }
  while (sum > U) {
    int pick = -1;
    for (int i = 0; i < D; ++i) {
      if (units[i] <= 1) continue;
      if (pick < 0 ||
          double(units[i]) - share[i] > double(units[pick]) - share[pick])
        pick = i;
    }
    --units[pick];
    --sum;
  }

  while (true) {  // shave the peak one micro-batch at a time
    int a = 0, b = 0;
    for (int i = 1; i < D; ++i) {
      if (time_at(i, units[i]) > time_at(a, units[a])) a = i;
      if (time_at(i, units[i]) < time_at(b, units[b])) b = i;
    }
    if (a == b || units[a] <= 1) break;
    double cur = time_at(a, units[a]);
    --units[a];
    ++units[b];
    double now = 0;
    for (int i = 0; i < D; ++i) now = std::max(now, time_at(i, units[i]));
    if (now < cur * (1.0 - 1e-12)) continue;
    ++units[a];
    --units[b];
    break;
  }

  std::vector<std::int64_t> batches(D);
  for (int i = 0; i < D; ++i) {
    batches[i] = units[i] * mb;
    pipelines[i].batch = batches[i];
  }
  return batches;
}

namespace {

struct BuiltPipeline {
  bool ok = false;
  PipelinePlan plan;
  double time = kInf;
};

int distinct_machines(const ClusterSpec& c, const std::vector<int>& devs) {
  std::set<int> ms;
  for (int d : devs) ms.insert(c.devices[d].machine);
  return int(ms.size());
}

// usable micro batch sizes: positive divisors of the global batch
std::vector<std::int64_t> usable_micro(const SchedulerConfig& cfg) {
  std::vector<std::int64_t> mbs;
  for (auto mb : cfg.micro_batch_candidates)
    if (mb >= 1 && mb <= cfg.global_batch && cfg.global_batch % mb == 0)
      mbs.push_back(mb);
  std::sort(mbs.begin(), mbs.end());
  mbs.erase(std::unique(mbs.begin(), mbs.end()), mbs.end());
  return mbs;
}

}  // namespace

ScheduleResult schedule(const ClusterSpec& c, const ModelSpec& m,
                        const SchedulerConfig& cfg) {
  int N = int(c.devices.size());
  if (N == 0) throw InvalidArgument("empty cluster");
  if (cfg.iterations < 1) throw InvalidArgument("iterations must be >= 1");
  int threads = resolve_threads(cfg.threads);
  DeviceGraph G = build_device_graph(c);

  ScheduleResult out;
  SearchState st;
  auto mbs = usable_micro(cfg);
  if (mbs.empty()) {
    out.found = false;
    out.message = "no feasible plan: no micro batch candidate divides the global batch";
    return out;
  }

  bool any_violation = false;
  MemoryReport least_mem;
  double least_over = kInf;
  int rr = 1;

  for (int t = 0; t < cfg.iterations; ++t) {
    st.iteration = t;
    int d_dp;
    if (t % 4 == 3 && st.has_best) {
      d_dp = st.best_d_dp;  // revisit the incumbent's D_dp with a fresh seed
    } else {
      d_dp = rr;
      rr = rr % N + 1;
    }
    CutObjective obj = choose_cut_objective(st);

    IterationTrace tr;
    tr.iteration = t;
    tr.d_dp = d_dp;
    tr.objective = obj == CutObjective::Min ? 'n' : 'x';

    Partition part;
    bool part_ok = true;
    try {
      std::uint64_t pseed = mix_seed(cfg.seed, std::uint64_t(t), 0x9a17);
      part = cfg.random_partition
                 ? random_partition(G, d_dp, cfg.balance_cap, pseed)
                 : partition_graph(G, d_dp, obj, cfg.balance_cap, pseed);
    } catch (const std::exception&) {
      part_ok = false;
    }
    if (!part_ok) {
      tr.best_cost = st.has_best ? st.best_report.total : kInf;
      tr.best_mfu = st.has_best ? st.best_report.mfu : 0;
      tr.ema_pipeline = st.ema_pipeline;
      tr.ema_dp = st.ema_dp;
      out.trace.push_back(tr);
      continue;
    }
    int D = int(part.groups.size());

    // build every (micro batch, group, k_i) pipeline variant; k-sweeps are
    // independent so they fan out across threads, results land by index
    struct Task {
      int mbi, gi, k;
    };
    std::vector<Task> tasks;
    std::vector<std::vector<std::vector<BuiltPipeline>>> built(mbs.size());
    for (size_t mbi = 0; mbi < mbs.size(); ++mbi) {
      if (cfg.global_batch < std::int64_t(D) * mbs[mbi]) continue;
      built[mbi].resize(D);
      for (int gi = 0; gi < D; ++gi) {
        int kmax = int(std::min<std::int64_t>(
            {std::int64_t(part.groups[gi].size()),
             std::int64_t(2 * distinct_machines(c, part.groups[gi])),
             m.num_layers}));
        kmax = std::max(kmax, 1);
        built[mbi][gi].resize(kmax);
        for (int k = 1; k <= kmax; ++k) tasks.push_back({int(mbi), gi, k});
      }
    }
    parallel_for(int(tasks.size()), threads, [&](int ti) {
      auto [mbi, gi, k] = tasks[ti];
      std::int64_t mb = mbs[mbi];
      std::int64_t eq = std::max<std::int64_t>(1, (cfg.global_batch / mb) / D);
      BuiltPipeline bp;
      try {
        bp.plan = build_pipeline(part.groups[gi], k, cfg.tau, eq * mb, mb, m, c,
                                 mix_seed(cfg.seed, std::uint64_t(t),
                                          std::uint64_t(gi) * 131 + k, mb),
                                 cfg.balance_cap, cfg.state_multiplier);
        bp.time = pipeline_time(bp.plan, m, c);
        bp.ok = std::isfinite(bp.time);
      } catch (const std::exception&) {
        bp.ok = false;
      }
      built[mbi][gi][k - 1] = std::move(bp);
    });

    bool cand_set = false, cand_feasible = false;
    ExecutionPlan cand_plan;
    CostReport cand_report;
    double cand_key = kInf;

    for (size_t mbi = 0; mbi < mbs.size(); ++mbi) {
      if (built[mbi].empty()) continue;
      std::vector<PipelinePlan> pipes;
      bool ok = true;
      for (int gi = 0; gi < D && ok; ++gi) {
        const BuiltPipeline* best = nullptr;
        for (const auto& bp : built[mbi][gi])
          if (bp.ok && (!best || bp.time < best->time)) best = &bp;
        if (!best) ok = false;
        else pipes.push_back(best->plan);
      }
      ++out.candidates_total;
      if (!ok) {
        ++out.candidates_infeasible;
        continue;
      }
      try {
        assign_batches(pipes, cfg.global_batch, m, c);
        // final batches shift the bubble tradeoff; re-balance layers once
        for (auto& pipe : pipes)
          assign_layers(pipe.stages, m.num_layers, m, c, pipe.micro_batch,
                        pipe.num_micro_batches(), cfg.state_multiplier);
        ExecutionPlan plan;
        plan.pipelines = std::move(pipes);
        plan.global_batch = cfg.global_batch;
        build_dp_groups(plan, m);
        CostReport rep = iteration_time(plan, m, c, cfg.state_multiplier);
        if (!rep.memory.fits) {
          any_violation = true;
          if (rep.memory.worst_overage < least_over) {
            least_over = rep.memory.worst_overage;
            least_mem = rep.memory;
          }
          ++out.candidates_infeasible;
        }
        double worst_pipe = *std::max_element(rep.per_pipeline.begin(),
                                              rep.per_pipeline.end());
        double key = rep.feasible ? rep.total : worst_pipe + rep.dp_comm;
        bool better = !cand_set ||
                      (rep.feasible && !cand_feasible) ||
                      (rep.feasible == cand_feasible && key < cand_key);
        if (better) {
          cand_set = true;
          cand_feasible = rep.feasible;
          cand_key = key;
          cand_plan = std::move(plan);
          cand_report = std::move(rep);
        }
      } catch (const std::exception&) {
        ++out.candidates_infeasible;
        continue;
      }
    }

    if (cand_set) {
      double pm = *std::max_element(cand_report.per_pipeline.begin(),
                                    cand_report.per_pipeline.end());
      double dp = cand_report.dp_comm;
      if (std::isfinite(pm) && std::isfinite(dp)) {
        if (!st.ema_ready) {
          st.ema_pipeline = pm;
          st.ema_dp = dp;
          st.ema_ready = true;
        } else {
          st.ema_pipeline = cfg.ema_decay * st.ema_pipeline + (1.0 - cfg.ema_decay) * pm;
          st.ema_dp = cfg.ema_decay * st.ema_dp + (1.0 - cfg.ema_decay) * dp;
        }
      }
      tr.feasible = cand_feasible;
      tr.candidate_cost = cand_feasible ? cand_report.total : kInf;
      tr.candidate_mfu = cand_report.mfu;
      if (cand_feasible &&
          (!st.has_best || cand_report.total < st.best_report.total)) {
        st.has_best = true;
        st.best_plan = cand_plan;
        st.best_report = cand_report;
        st.best_d_dp = d_dp;
      }
    }
    tr.best_cost = st.has_best ? st.best_report.total : kInf;
    tr.best_mfu = st.has_best ? st.best_report.mfu : 0;
    tr.ema_pipeline = st.ema_pipeline;
    tr.ema_dp = st.ema_dp;
    out.trace.push_back(tr);
  }

  if (st.has_best) {
    out.found = true;
    out.plan = std::move(st.best_plan);
    out.report = std::move(st.best_report);
  } else {
    out.found = false;
    out.message = "no feasible plan";
    if (any_violation) {
      out.report.memory = least_mem;
      out.report.feasible = false;
      out.message += ": closest candidate exceeds device memory by " +
                     std::to_string(std::int64_t(least_over)) + " bytes";
    }
  }
  return out;
}

ScheduleResult symmetric_baseline(const ClusterSpec& c, const ModelSpec& m,
                                  const SchedulerConfig& cfg) {
  int N = int(c.devices.size());
  if (N == 0) throw InvalidArgument("empty cluster");
  std::vector<int> order;
  for (const auto& mdevs : c.devices_by_machine())
    order.insert(order.end(), mdevs.begin(), mdevs.end());

  auto mbs = usable_micro(cfg);
  ScheduleResult out;
  double best_total = kInf;

  for (std::int64_t ddp = 1; ddp <= N; ++ddp) {
    if (N % ddp != 0) continue;
    if (cfg.global_batch % ddp != 0) continue;  // uneven split is not symmetric
    std::int64_t rest = N / ddp;
    std::int64_t batch = cfg.global_batch / ddp;
    for (std::int64_t dtp = 1; dtp <= rest; ++dtp) {
      if (rest % dtp != 0) continue;
      std::int64_t dpp = rest / dtp;
      if (dpp > m.num_layers) continue;

      // consecutive tp blocks over machine-grouped device order
      bool valid = true;
      std::vector<std::vector<int>> blocks;
      for (int off = 0; off < N && valid; off += int(dtp)) {
        std::vector<int> blk(order.begin() + off, order.begin() + off + dtp);
        int mach = c.devices[blk[0]].machine;
        double flops = c.devices[blk[0]].peak_flops;
        for (int d : blk) {
          if (c.devices[d].machine != mach) valid = false;  // crosses a machine
          if (c.devices[d].peak_flops != flops) valid = false;  // mixed tp types
        }
        blocks.push_back(std::move(blk));
      }
      if (!valid) continue;

      for (std::int64_t mb : mbs) {
        if (mb > batch || batch % mb != 0) continue;
        std::vector<PipelinePlan> pipes;
        bool ok = true;
        for (std::int64_t p = 0; p < ddp && ok; ++p) {
          PipelinePlan pipe;
          pipe.batch = batch;
          pipe.micro_batch = mb;
          for (std::int64_t s = 0; s < dpp; ++s) {
            StagePlan st;
            st.devices = blocks[size_t(p * dpp + s)];
            st.tp = int(dtp);
            pipe.stages.push_back(std::move(st));
          }
          // uniform layers, remainder to the front, clamped into memory caps
          std::vector<int> counts(static_cast<size_t>(dpp), 0);
          std::int64_t base = m.num_layers / dpp, rem = m.num_layers % dpp;
          for (std::int64_t s = 0; s < dpp; ++s)
            counts[s] = int(base + (s < rem ? 1 : 0));
          try {
            std::vector<int> caps;
            {
              double params = 48.0 * double(m.hidden_dim) * double(m.hidden_dim) *
                              double(m.bytes_per_element);
              double act = activation_bytes(m, mb);
              for (auto& stg : pipe.stages) {
                double per = (params / double(stg.devices.size()) + act) *
                             cfg.state_multiplier;
                double mn = kInf;
                for (int d : stg.devices)
                  mn = std::min(mn, c.devices[d].memory_bytes);
                caps.push_back(int(std::min(std::floor(mn / per),
                                            double(m.num_layers))));
              }
            }
            std::int64_t cap_sum = 0, deficit = 0;
            for (size_t s = 0; s < counts.size(); ++s) {
              if (caps[s] < 1) throw Infeasible("stage cannot hold one layer");
              if (counts[s] > caps[s]) {
                deficit += counts[s] - caps[s];
                counts[s] = caps[s];
              }
              cap_sum += caps[s];
            }
            if (cap_sum < m.num_layers)
              throw Infeasible("layer capacity short");
            while (deficit > 0) {  // spill clamped layers onto free stages
              int pick = -1;
              for (size_t s = 0; s < counts.size(); ++s)
                if (counts[s] < caps[s] &&
                    (pick < 0 || caps[s] - counts[s] > caps[pick] - counts[pick]))
                  pick = int(s);
              ++counts[pick];
              --deficit;
            }
            refine_layers(pipe.stages, counts, m, c, mb,
                          pipe.num_micro_batches(), cfg.state_multiplier);
          } catch (const std::exception&) {
            ok = false;
            break;
          }
          pipes.push_back(std::move(pipe));
        }
        if (!ok) continue;
        ExecutionPlan plan;
        plan.pipelines = std::move(pipes);
        plan.global_batch = cfg.global_batch;
        build_dp_groups(plan, m);
        CostReport rep;
        try {
          rep = iteration_time(plan, m, c, cfg.state_multiplier);
        } catch (const std::exception&) {
          continue;
        }
        ++out.candidates_total;
        if (!rep.feasible) {
          ++out.candidates_infeasible;
          continue;
        }
        if (rep.total < best_total) {
          best_total = rep.total;
          out.plan = std::move(plan);
          out.report = std::move(rep);
          out.found = true;
        }
      }
    }
  }
  if (!out.found) out.message = "no feasible symmetric plan";
  return out;
}

}  // namespace hexplan
