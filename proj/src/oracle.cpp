#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "cost_model.hpp"
#include "errors.hpp"
#include "parallel.hpp"

namespace hexplan {

namespace {

unsigned long long choose(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  unsigned long long r = 1;
  for (std::int64_t i = 1; i <= k; ++i) r = r * (unsigned long long)(n - k + i) / i;
  return r;
}

// every ordered stage sequence of `devs` where a stage stays on one machine
// and holds devices of one type
void stage_sequences(const ClusterSpec& c, const std::vector<int>& devs,
                     std::vector<StagePlan>& cur,
                     std::vector<std::vector<StagePlan>>& out) {
  if (devs.empty()) {
    out.push_back(cur);
    return;
  }
  std::vector<int> machines;
  for (int d : devs)
    if (std::find(machines.begin(), machines.end(), c.devices[d].machine) ==
        machines.end())
      machines.push_back(c.devices[d].machine);
  std::sort(machines.begin(), machines.end());

  for (int mach : machines) {
    std::vector<int> local;
    for (int d : devs)
      if (c.devices[d].machine == mach) local.push_back(d);
    int ln = int(local.size());
    for (unsigned mask = 1; mask < (1u << ln); ++mask) {
      StagePlan st;
      double flops = -1;
      bool mixed = false;
      for (int i = 0; i < ln; ++i) {
        if (!(mask >> i & 1)) continue;
        int d = local[i];
        if (flops < 0) flops = c.devices[d].peak_flops;
        else if (c.devices[d].peak_flops != flops) mixed = true;
        st.devices.push_back(d);
      }
      if (mixed) continue;
      st.tp = int(st.devices.size());
      std::vector<int> rest;
      for (int d : devs)
        if (std::find(st.devices.begin(), st.devices.end(), d) ==
            st.devices.end())
          rest.push_back(d);
      cur.push_back(std::move(st));
      stage_sequences(c, rest, cur, out);
      cur.pop_back();
    }
  }
}

struct PipeChoice {
  double fill = 0, bott = 0;
  std::vector<int> counts;           // layers per stage
  std::vector<int> repr;             // layer -> representative device
  const std::vector<StagePlan>* seq = nullptr;
};

struct GroupOptions {
  std::vector<std::vector<StagePlan>> seqs;
  std::vector<PipeChoice> choices;   // memory-feasible ones only
  unsigned long long comp_leaves = 0;  // all layer comps over all seqs
};

// per-layer cost and hop structure of one stage sequence
struct SeqCosts {
  std::vector<double> p, h;
  std::vector<double> min_mem, param_share;
  bool ok = true;
};

SeqCosts seq_costs(const std::vector<StagePlan>& seq, std::int64_t mb,
                   const ModelSpec& m, const ClusterSpec& c) {
  SeqCosts sc;
  int k = int(seq.size());
  sc.p.resize(k);
  sc.h.assign(k, 0.0);
  sc.min_mem.resize(k);
  sc.param_share.resize(k);
  double params = 48.0 * double(m.hidden_dim) * double(m.hidden_dim) *
                  double(m.bytes_per_element);
  for (int j = 0; j < k; ++j) {
    sc.p[j] = comp_tp_layer(seq[j], mb, m, c) + comm_tp_layer(seq[j], mb, m, c);
    if (j + 1 < k) sc.h[j] = comm_pp_hop(seq[j], seq[j + 1], mb, m, c);
    double mn = kInf;
    for (int d : seq[j].devices) mn = std::min(mn, c.devices[d].memory_bytes);
    sc.min_mem[j] = mn;
    sc.param_share[j] = params / double(seq[j].devices.size());
  }
  return sc;
}

GroupOptions build_group_options(const ClusterSpec& c, const ModelSpec& m,
                                 const std::vector<int>& group, std::int64_t mb,
                                 double mult, bool count_only) {
  GroupOptions opt;
  std::vector<StagePlan> cur;
  stage_sequences(c, group, cur, opt.seqs);
  std::int64_t L = m.num_layers;
  double act = activation_bytes(m, mb);

  for (const auto& seq : opt.seqs) {
    int k = int(seq.size());
    if (k > L) continue;
    opt.comp_leaves += choose(L - 1, k - 1);
    if (count_only) continue;
    SeqCosts sc = seq_costs(seq, mb, m, c);

    // walk compositions of L into k positive parts
    std::vector<int> comp(k);
    auto emit = [&]() {
      for (int j = 0; j < k; ++j)
        if (double(comp[j]) * (sc.param_share[j] + act) * mult > sc.min_mem[j])
          return;
      PipeChoice ch;
      ch.counts = comp;
      ch.seq = &seq;
      ch.repr.resize(size_t(L));
      int at = 0;
      for (int j = 0; j < k; ++j) {
        double sj = double(comp[j]) * sc.p[j] + sc.h[j];
        ch.fill += sj;
        ch.bott = std::max(ch.bott, sj);
        for (int l = 0; l < comp[j]; ++l) ch.repr[at++] = seq[j].devices[0];
      }
      opt.choices.push_back(std::move(ch));
    };
    auto gen = [&](auto&& self, int j, int remaining) -> void {
      if (j == k - 1) {
        comp[j] = remaining;
        emit();
        return;
      }
      for (int v = 1; v <= remaining - (k - 1 - j); ++v) {
        comp[j] = v;
        self(self, j + 1, remaining - v);
      }
    };
    gen(gen, 0, int(L));
  }
  return opt;
}

// enumerate set partitions by restricted growth strings
void set_partitions(int n, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> a(n, 0), b(n, 0);
  while (true) {
    fn(a);
    int i = n - 1;
    while (i > 0 && a[i] == b[i - 1] + 1) --i;
    if (i == 0) break;
    ++a[i];
    b[i] = std::max(b[i - 1], a[i]);
    for (int j = i + 1; j < n; ++j) {
      a[j] = 0;
      b[j] = b[j - 1];
    }
  }
}

struct TaskBest {
  double cost = kInf;
  std::string key;
  ExecutionPlan plan;
  bool has = false;
  unsigned long long leaves = 0;
};

}  // namespace

std::string plan_key(const ExecutionPlan& plan) {
  std::ostringstream os;
  for (const auto& p : plan.pipelines) {
    os << 'P' << p.batch << '/' << p.micro_batch << ':';
    for (const auto& st : p.stages) {
      os << '[';
      for (int d : st.devices) os << d << ',';
      os << '|' << st.layer_start << '+' << st.layer_count << ']';
    }
    os << ';';
  }
  return os.str();
}

OracleOutcome brute_force_schedule(const ClusterSpec& c, const ModelSpec& m,
                                   const SchedulerConfig& cfg,
                                   OracleLimits limits, bool count_only) {
  int N = int(c.devices.size());
  if (N > limits.max_devices)
    throw LimitExceeded("oracle scale exceeded: " + std::to_string(N) +
                        " devices over the limit of " +
                        std::to_string(limits.max_devices));
  if (m.num_layers > limits.max_layers)
    throw LimitExceeded("oracle scale exceeded: " + std::to_string(m.num_layers) +
                        " layers over the limit of " +
                        std::to_string(limits.max_layers));

  std::vector<std::int64_t> mbs;
  for (auto mb : cfg.micro_batch_candidates)
    if (mb >= 1 && mb <= cfg.global_batch && cfg.global_batch % mb == 0)
      mbs.push_back(mb);
  std::sort(mbs.begin(), mbs.end());
  mbs.erase(std::unique(mbs.begin(), mbs.end()), mbs.end());

  std::vector<std::vector<std::vector<int>>> partitions;
  set_partitions(N, [&](const std::vector<int>& rgs) {
    int groups = *std::max_element(rgs.begin(), rgs.end()) + 1;
    std::vector<std::vector<int>> part(groups);
    for (int d = 0; d < N; ++d) part[rgs[d]].push_back(d);
    partitions.push_back(std::move(part));
  });

  struct Task {
    std::int64_t mb;
    const std::vector<std::vector<int>>* part;
  };
  std::vector<Task> tasks;
  for (auto mb : mbs)
    for (const auto& part : partitions) tasks.push_back({mb, &part});

  std::vector<TaskBest> results(tasks.size());
  int threads = resolve_threads(cfg.threads);

  parallel_for(int(tasks.size()), count_only ? 1 : threads, [&](int ti) {
    const Task& task = tasks[ti];
    TaskBest& best = results[ti];
    const auto& part = *task.part;
    int D = int(part.size());
    std::int64_t U = cfg.global_batch / task.mb;
    unsigned long long splits = choose(U - 1, D - 1);

    std::vector<GroupOptions> opts;
    unsigned long long combo_leaves = 1;
    for (const auto& grp : part) {
      opts.push_back(build_group_options(c, m, grp, task.mb, cfg.state_multiplier,
                                         count_only));
      combo_leaves *= opts.back().comp_leaves;
    }
    best.leaves = combo_leaves * splits;
    if (count_only || splits == 0) return;
    for (const auto& o : opts)
      if (o.choices.empty()) return;  // nothing feasible in some group

    std::unordered_map<std::uint64_t, double> dp_memo;
    std::vector<const PipeChoice*> pick(D);
    std::vector<double> psum(size_t(m.num_layers) + 1, 0.0);
    std::vector<std::int64_t> units(D);

    auto eval_combo = [&]() {
      // gradient sync cost is fixed by the choice combo, batch split is not
      for (std::int64_t l = 0; l < m.num_layers; ++l) {
        std::uint64_t key = 0;
        DpGroup g;
        g.layer = int(l);
        for (int i = 0; i < D; ++i) {
          int r = pick[i]->repr[l];
          key = key * 64 + std::uint64_t(r) + 1;
          g.members.push_back(r);
        }
        auto it = dp_memo.find(key);
        double v;
        if (it == dp_memo.end()) {
          v = comm_dp_layer(g, m, c);
          dp_memo.emplace(key, v);
        } else {
          v = it->second;
        }
        psum[l + 1] = psum[l] + v;
      }
      double dp_cost = 0;
      for (int i = 0; i < D; ++i) {
        int at = 0;
        for (int cnt : pick[i]->counts) {
          dp_cost = std::max(dp_cost, psum[at + cnt] - psum[at]);
          at += cnt;
        }
      }

      auto materialize = [&]() {
        ExecutionPlan cand;
        for (int i = 0; i < D; ++i) {
          PipelinePlan p;
          p.stages = *pick[i]->seq;
          int at = 0;
          for (size_t j = 0; j < p.stages.size(); ++j) {
            p.stages[j].layer_start = at;
            p.stages[j].layer_count = pick[i]->counts[j];
            at += pick[i]->counts[j];
          }
          p.batch = units[i] * task.mb;
          p.micro_batch = task.mb;
          cand.pipelines.push_back(std::move(p));
        }
        cand.global_batch = cfg.global_batch;
        return cand;
      };
      auto consider = [&]() {
        double worst = 0;
        for (int i = 0; i < D; ++i)
          worst = std::max(worst,
                           pick[i]->fill + double(units[i] - 1) * pick[i]->bott);
        double total = worst + dp_cost;
        if (total < best.cost || !best.has) {
          best.cost = total;
          best.has = true;
          best.plan = materialize();
          best.key = plan_key(best.plan);
        } else if (total == best.cost) {
          ExecutionPlan cand = materialize();  // rare: tie comparison only
          std::string k2 = plan_key(cand);
          if (k2 < best.key) {
            best.plan = std::move(cand);
            best.key = std::move(k2);
          }
        }
      };
      // walk unit compositions of U into D positive parts
      auto genu = [&](auto&& self, int i, std::int64_t remaining) -> void {
        if (i == D - 1) {
          units[i] = remaining;
          consider();
          return;
        }
        for (std::int64_t v = 1; v <= remaining - (D - 1 - i); ++v) {
          units[i] = v;
          self(self, i + 1, remaining - v);
        }
      };
      genu(genu, 0, U);
    };

    auto rec = [&](auto&& self, int gi) -> void {
      if (gi == D) {
        eval_combo();
        return;
      }
      for (const auto& ch : opts[gi].choices) {
        pick[gi] = &ch;
        self(self, gi + 1);
      }
    };
    rec(rec, 0);
  });

  OracleOutcome out;
  const TaskBest* winner = nullptr;
  for (const auto& r : results) {
    out.enumerated += r.leaves;
    if (!r.has) continue;
    if (!winner || r.cost < winner->cost ||
        (r.cost == winner->cost && r.key < winner->key))
      winner = &r;
  }
  if (count_only) return out;

  if (!winner) {
    out.result.found = false;
    out.result.message = "no feasible plan";
    return out;
  }
  out.result.plan = winner->plan;
  build_dp_groups(out.result.plan, m);
  out.result.report = iteration_time(out.result.plan, m, c, cfg.state_multiplier);
  out.result.found = out.result.report.feasible;
  if (!out.result.found) out.result.message = "no feasible plan";
  return out;
}

}  // namespace hexplan
