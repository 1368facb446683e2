#include "pipeline_layout.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cost_model.hpp"
#include "errors.hpp"

namespace hexplan {

namespace {

// closed-form pipeline time for fixed per-layer stage costs and hops
double eval_counts(const std::vector<int>& counts, const std::vector<double>& p,
                   const std::vector<double>& h, std::int64_t n_mb) {
  double fill = 0, bott = 0;
  for (size_t j = 0; j < counts.size(); ++j) {
    double sj = double(counts[j]) * p[j] + h[j];
    fill += sj;
    bott = std::max(bott, sj);
  }
  return fill + double(n_mb - 1) * bott;
}

// most layers stage j can hold before its devices run out of memory
std::vector<int> layer_caps(const std::vector<StagePlan>& stages, std::int64_t L,
                            const ModelSpec& m, const ClusterSpec& c,
                            std::int64_t micro_batch, double mult) {
  double params = 48.0 * double(m.hidden_dim) * double(m.hidden_dim) *
                  double(m.bytes_per_element);
  double act = activation_bytes(m, micro_batch);
  std::vector<int> caps(stages.size());
  for (size_t j = 0; j < stages.size(); ++j) {
    double per_layer =
        (params / double(stages[j].devices.size()) + act) * mult;
    double min_mem = kInf;
    for (int d : stages[j].devices)
      min_mem = std::min(min_mem, c.devices[d].memory_bytes);
    double raw = per_layer > 0 ? std::floor(min_mem / per_layer) : double(L);
    caps[j] = int(std::min(raw, double(L)));
  }
  return caps;
}

void write_ranges(std::vector<StagePlan>& stages, const std::vector<int>& counts) {
  int at = 0;
  for (size_t j = 0; j < stages.size(); ++j) {
    stages[j].layer_start = at;
    stages[j].layer_count = counts[j];
    at += counts[j];
  }
}

void hill_climb(std::vector<int>& counts, const std::vector<double>& p,
                const std::vector<double>& h, const std::vector<int>& caps,
                std::int64_t n_mb) {
  int D = int(counts.size());
  while (true) {
    double cur = eval_counts(counts, p, h, n_mb);
    double best = cur;
    int best_src = -1, best_dst = -1;
    for (int j = 0; j + 1 < D; ++j) {
      for (int dir = 0; dir < 2; ++dir) {
        int src = dir == 0 ? j : j + 1;
        int dst = dir == 0 ? j + 1 : j;
        if (counts[src] <= 1 || counts[dst] >= caps[dst]) continue;
        --counts[src];
        ++counts[dst];
        double t = eval_counts(counts, p, h, n_mb);
        ++counts[src];
        --counts[dst];
        if (t < best * (1.0 - 1e-12)) {
          best = t;
          best_src = src;
          best_dst = dst;
        }
      }
    }
    if (best_src < 0) break;
    --counts[best_src];
    ++counts[best_dst];
  }
}

}  // namespace

Partition secondary_partition(const std::vector<int>& group, int k_i,
                              const ClusterSpec& c, std::uint64_t seed,
                              double balance_cap) {
  DeviceGraph g = build_device_graph(c, group);
  return partition_graph(g, k_i, CutObjective::Min, balance_cap, seed);
}

IntraGroupStrategy intra_group_strategy(const std::vector<int>& stage_group,
                                        const ModelSpec& m, const ClusterSpec& c,
                                        std::int64_t micro_batch,
                                        double state_multiplier) {
  if (stage_group.empty()) throw InvalidArgument("empty stage group");
  std::vector<int> devs = stage_group;
  std::sort(devs.begin(), devs.end());
  std::map<int, std::vector<int>> by_machine;
  for (int d : devs) by_machine[c.devices[d].machine].push_back(d);

  double params = 48.0 * double(m.hidden_dim) * double(m.hidden_dim) *
                  double(m.bytes_per_element);
  double act = activation_bytes(m, micro_batch);

  IntraGroupStrategy out;
  for (auto& [machine, mdevs] : by_machine) {
    (void)machine;
    int n_m = int(mdevs.size());

    struct Cand {
      int tp;
      double score;
      bool fits;
      std::vector<StagePlan> stages;
    };
    std::vector<Cand> cands;
    for (int t = 1; t <= n_m; ++t) {
      if (n_m % t != 0) continue;
      Cand cand;
      cand.tp = t;
      cand.score = 0;
      bool mixed = false;
      for (int off = 0; off < n_m; off += t) {
        StagePlan st;
        st.devices.assign(mdevs.begin() + off, mdevs.begin() + off + t);
        st.tp = t;
        try {
          double per_layer = comp_tp_layer(st, micro_batch, m, c) +
                             comm_tp_layer(st, micro_batch, m, c);
          cand.score = std::max(cand.score, per_layer);
        } catch (const InvalidArgument&) {
          mixed = true;  // mixed card types inside one shard group
          break;
        }
        cand.stages.push_back(std::move(st));
      }
      if (mixed) continue;
      cand.fits = true;
      double per_layer_bytes = (params / double(t) + act) * state_multiplier;
      for (int d : mdevs)
        if (per_layer_bytes > c.devices[d].memory_bytes) cand.fits = false;
      cands.push_back(std::move(cand));
    }

    bool any_fits = std::any_of(cands.begin(), cands.end(),
                                [](const Cand& x) { return x.fits; });
    const Cand* best = nullptr;
    for (const auto& cand : cands) {
      if (any_fits && !cand.fits) continue;  // keep all only when nothing fits
      if (!best || cand.score < best->score) best = &cand;  // ties: lower tp wins
    }
    for (const auto& st : best->stages) out.stages.push_back(st);
  }
  return out;
}

namespace {

// stage orders reachable by the tau-greedy walk (identity always
// included), deduped and sorted by hop-cost sum, ties lexicographic
std::vector<std::vector<int>> candidate_orders(
    const std::vector<IntraGroupStrategy>& strategies, int tau,
    const ModelSpec& m, const ClusterSpec& c, std::int64_t micro_batch) {
  int n = int(strategies.size());
  if (n == 0) throw InvalidArgument("no strategies to order");
  if (tau < 1) throw InvalidArgument("tau must be >= 1");

  // inter-strategy weight: best single link between the two device sets
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> hop(n, std::vector<double>(n, 0.0));
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v) continue;
      double best = 0;
      for (const auto& su : strategies[u].stages)
        for (int a : su.devices)
          for (const auto& sv : strategies[v].stages)
            for (int b : sv.devices) best = std::max(best, c.bandwidth[a][b]);
      w[u][v] = best;
      hop[u][v] = comm_pp_hop(strategies[u].stages.back(),
                              strategies[v].stages.front(), micro_batch, m, c);
    }
  }

  constexpr size_t kPathCap = 20000;
  std::vector<std::vector<int>> orders;
  std::vector<int> identity(n);
  for (int i = 0; i < n; ++i) identity[i] = i;
  orders.push_back(identity);

  std::vector<int> path;
  std::vector<char> vis(n, 0);
  auto dfs = [&](auto&& self) -> void {
    if (orders.size() >= kPathCap) return;
    if (int(path.size()) == n) {
      orders.push_back(path);
      return;
    }
    int last = path.back();
    std::vector<int> next;
    for (int v = 0; v < n; ++v)
      if (!vis[v]) next.push_back(v);
    std::sort(next.begin(), next.end(), [&](int a, int b) {
      return w[last][a] != w[last][b] ? w[last][a] > w[last][b] : a < b;
    });
    if (int(next.size()) > tau) next.resize(tau);
    for (int v : next) {
      vis[v] = 1;
      path.push_back(v);
      self(self);
      path.pop_back();
      vis[v] = 0;
    }
  };
  for (int start = 0; start < n; ++start) {
    path.assign(1, start);
    vis.assign(n, 0);
    vis[start] = 1;
    dfs(dfs);
  }

  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());

  std::vector<std::pair<double, size_t>> keyed(orders.size());
  for (size_t i = 0; i < orders.size(); ++i) {
    double s = 0;
    for (int j = 0; j + 1 < n; ++j) s += hop[orders[i][j]][orders[i][j + 1]];
    keyed[i] = {s, i};
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::vector<int>> out;
  out.reserve(orders.size());
  for (const auto& [s, i] : keyed) out.push_back(orders[i]);
  return out;
}

std::vector<StagePlan> stages_in_order(
    const std::vector<IntraGroupStrategy>& strategies,
    const std::vector<int>& order) {
  std::vector<StagePlan> out;
  for (int u : order)
    for (const auto& st : strategies[u].stages) out.push_back(st);
  return out;
}

}  // namespace

std::vector<StagePlan> order_stages_greedy(
    const std::vector<IntraGroupStrategy>& strategies, int tau,
    const ModelSpec& m, const ClusterSpec& c, std::int64_t micro_batch,
    std::vector<int>* chosen_order) {
  auto orders = candidate_orders(strategies, tau, m, c, micro_batch);
  if (chosen_order) *chosen_order = orders.front();
  return stages_in_order(strategies, orders.front());
}

std::vector<int> assign_layers(std::vector<StagePlan>& stages, std::int64_t L,
                               const ModelSpec& m, const ClusterSpec& c,
                               std::int64_t micro_batch,
                               std::int64_t num_micro_batches,
                               double state_multiplier) {
  int D = int(stages.size());
  if (D == 0) throw InvalidArgument("no stages");
  if (L < D) throw InvalidArgument("more stages than layers");

  std::vector<double> p(D), h(D, 0.0);
  for (int j = 0; j < D; ++j)
    p[j] = comp_tp_layer(stages[j], micro_batch, m, c) +
           comm_tp_layer(stages[j], micro_batch, m, c);
  for (int j = 0; j + 1 < D; ++j)
    h[j] = comm_pp_hop(stages[j], stages[j + 1], micro_batch, m, c);

  auto caps = layer_caps(stages, L, m, c, micro_batch, state_multiplier);
  std::int64_t cap_sum = 0;
  for (int j = 0; j < D; ++j) {
    if (caps[j] < 1)
      throw Infeasible("stage cannot hold a single layer within memory");
    cap_sum += caps[j];
  }
  if (cap_sum < L)
    throw Infeasible("layer capacity short: pipeline cannot fit the model");

  double speed_sum = 0;
  for (int j = 0; j < D; ++j) speed_sum += 1.0 / p[j];
  std::vector<double> share(D);
  std::vector<int> counts(D);
  for (int j = 0; j < D; ++j) {
    share[j] = double(L) * (1.0 / p[j]) / speed_sum;
    counts[j] = std::clamp(int(std::floor(share[j])), 1, caps[j]);
  }
  std::int64_t sum = 0;
  for (int v : counts) sum += v;
  while (sum < L) {  // hand out leftovers by largest remainder
    int pick = -1;
    for (int j = 0; j < D; ++j) {
      if (counts[j] >= caps[j]) continue;
      if (pick < 0 || share[j] - counts[j] > share[pick] - counts[pick]) pick = j;
    }
    ++counts[pick];
    ++sum;
  }
  while (sum > L) {  // claw back from the most over-allocated
    int pick = -1;
    for (int j = 0; j < D; ++j) {
      if (counts[j] <= 1) continue;
      if (pick < 0 || counts[j] - share[j] > counts[pick] - share[pick]) pick = j;
    }
    --counts[pick];
    --sum;
  }

  hill_climb(counts, p, h, caps, num_micro_batches);
  write_ranges(stages, counts);
  return counts;
}

void refine_layers(std::vector<StagePlan>& stages, std::vector<int>& counts,
                   const ModelSpec& m, const ClusterSpec& c,
                   std::int64_t micro_batch, std::int64_t num_micro_batches,
                   double state_multiplier) {
  int D = int(stages.size());
  std::int64_t L = 0;
  for (int v : counts) L += v;
  std::vector<double> p(D), h(D, 0.0);
  for (int j = 0; j < D; ++j)
    p[j] = comp_tp_layer(stages[j], micro_batch, m, c) +
           comm_tp_layer(stages[j], micro_batch, m, c);
  for (int j = 0; j + 1 < D; ++j)
    h[j] = comm_pp_hop(stages[j], stages[j + 1], micro_batch, m, c);
  auto caps = layer_caps(stages, L, m, c, micro_batch, state_multiplier);
  hill_climb(counts, p, h, caps, num_micro_batches);
  write_ranges(stages, counts);
}

PipelinePlan build_pipeline(const std::vector<int>& group, int k_i, int tau,
                            std::int64_t batch, std::int64_t micro_batch,
                            const ModelSpec& m, const ClusterSpec& c,
                            std::uint64_t seed, double balance_cap,
                            double state_multiplier) {
  if (micro_batch < 1 || batch < micro_batch || batch % micro_batch != 0)
    throw InvalidArgument("micro batch must divide the pipeline batch");
  Partition part = secondary_partition(group, k_i, c, seed, balance_cap);
  std::vector<IntraGroupStrategy> strategies;
  for (size_t gi = 0; gi < part.groups.size(); ++gi) {
    auto s = intra_group_strategy(part.groups[gi], m, c, micro_batch,
                                  state_multiplier);
    s.source_group = int(gi);
    strategies.push_back(std::move(s));
  }
  // hop-sum ranking alone can hide a better bubble placement (which stage
  // eats the hop cost); evaluate the leading orders end to end
  auto orders = candidate_orders(strategies, tau, m, c, micro_batch);
  constexpr size_t kOrderEval = 48;
  PipelinePlan best;
  double best_time = kInf;
  bool have = false;
  std::exception_ptr first_err;
  for (size_t oi = 0; oi < orders.size() && oi < kOrderEval; ++oi) {
    PipelinePlan p;
    p.stages = stages_in_order(strategies, orders[oi]);
    p.batch = batch;
    p.micro_batch = micro_batch;
    try {
      assign_layers(p.stages, m.num_layers, m, c, micro_batch,
                    p.num_micro_batches(), state_multiplier);
    } catch (...) {
      if (!first_err) first_err = std::current_exception();
      continue;
    }
    double t = pipeline_time(p, m, c);
    if (!have || t < best_time) {
      have = true;
      best_time = t;
      best = std::move(p);
    }
  }
  if (!have) {
    if (first_err) std::rethrow_exception(first_err);
    throw Infeasible("no stage order admits a layer assignment");
  }
  return best;
}

}  // namespace hexplan
