#include "graph_partition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "errors.hpp"
#include "util.hpp"

namespace hexplan {

namespace {

constexpr int kExhaustiveLimit = 18;
// stop coarsening once exhaustive bisection is affordable
constexpr int kCoarsenFloor = kExhaustiveLimit;
// a vertex whose good partners are taken waits for the next level instead of
// chaining onto whatever is left; keeps locality groups from bleeding together
constexpr double kMatchAdmission = 0.6;
// wide beam at the root, where near-tied first cuts hide very different
// completed totals; recursive calls see far fewer masks and keep a short one
constexpr int kBisectBeam = 512;
constexpr int kBisectBeamCap = 768;
constexpr int kBisectBeamSub = 32;
constexpr int kBisectBeamSubCap = 64;
// mask evaluations allowed per initial partition; once spent, each level
// falls back to its first completing split so large k stays tractable
constexpr long long kBisectBudget = 16'000'000;
constexpr int kKlMaxPasses = 8;

// internal signal: this cap cannot be met, try a looser one
struct Unbalanced {};

double group_weight(const DeviceGraph& g, const std::vector<int>& grp,
                    const std::vector<int>& pos) {
  double w = 0;
  for (int v : grp) w += g.weight[pos[v]];
  return w;
}

// local index lookup for graphs whose verts are not 0..n-1
std::vector<int> position_map(const DeviceGraph& g) {
  int hi = 0;
  for (int v : g.verts) hi = std::max(hi, v);
  std::vector<int> pos(hi + 1, -1);
  for (int i = 0; i < g.size(); ++i) pos[g.verts[i]] = i;
  return pos;
}

struct Region {
  std::vector<int> nodes;  // local ids of the graph being split
  double weight = 0;
};

// cross bandwidth between two halves, local ids
double cross_weight(const DeviceGraph& g, const std::vector<int>& a,
                    const std::vector<int>& b) {
  double s = 0;
  for (int u : a)
    for (int v : b) s += g.beta[u][v];
  return s;
}

// splits region into k groups appended to out; returns the total bandwidth
// crossing between the produced groups
double bisect(const DeviceGraph& g, Region region, int k, CutObjective obj,
              double cap, double avg, std::vector<std::vector<int>>& out,
              long long& budget, int depth = 0) {
  if (k == 1) {
    out.push_back(std::move(region.nodes));
    return 0.0;
  }
  int k1 = (k + 1) / 2, k2 = k - k1;
  int n = int(region.nodes.size());
  if (n < k) throw Unbalanced{};
  // side-1 weight must leave both halves attainable under the final cap
  double lo = region.weight - cap * avg * double(k2);
  double hi = cap * avg * double(k1);

  std::vector<int> side1, side2;
  if (n <= kExhaustiveLimit) {
    // subset sums by lowest-bit recurrence so each mask is O(1) to score:
    // cross(S, region\S) = rowsum(S) - 2 * inside(S). The scratch buffers are
    // reused dirty across calls: every entry is written before it is read
    // (index `rest` < `mask`), and the parent is done with them once `ranked`
    // exists, so recursion below may clobber them freely.
    const unsigned full = 1u << n;
    budget -= full;
    thread_local std::vector<double> wsum, rsum, inside;
    if (wsum.size() < full) {
      wsum.resize(full);
      rsum.resize(full);
      inside.resize(full);
    }
    std::vector<double> w(n), rowsum(n, 0.0);
    std::vector<double> b(size_t(n) * n);
    for (int i = 0; i < n; ++i) w[i] = g.weight[region.nodes[i]];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double e = i == j ? 0.0 : g.beta[region.nodes[i]][region.nodes[j]];
        b[size_t(i) * n + j] = e;
        rowsum[i] += e;
      }
    wsum[0] = rsum[0] = inside[0] = 0.0;
    for (unsigned mask = 1; mask < full; ++mask) {
      int low = std::countr_zero(mask);
      unsigned rest = mask & (mask - 1);
      wsum[mask] = wsum[rest] + w[low];
      rsum[mask] = rsum[rest] + rowsum[low];
      double s = 0;
      for (unsigned r = rest; r; r &= r - 1)
        s += b[size_t(low) * n + std::countr_zero(r)];
      inside[mask] = inside[rest] + s;
    }
    std::vector<std::pair<double, unsigned>> ranked;
    for (unsigned mask = 1; mask + 1 < full; ++mask) {
      // equal halves make mask and complement the same split; keep one
      if (k1 == k2 && !(mask & 1)) continue;
      int n1 = std::popcount(mask);
      if (n1 < k1 || n - n1 < k2) continue;
      double w1 = wsum[mask];
      if (w1 < lo || w1 > hi) continue;
      ranked.emplace_back(rsum[mask] - 2 * inside[mask], mask);
    }
    if (ranked.empty()) throw Unbalanced{};
    if (obj == CutObjective::Min)
      std::sort(ranked.begin(), ranked.end());
    else
      std::sort(ranked.begin(), ranked.end(),
                [](const auto& a, const auto& b) {
                  return a.first != b.first ? a.first > b.first : a.second < b.second;
                });
    // the lowest first-split cut often completes into a worse k-way total (or
    // into halves with no balanced sub-split at all), so finish a beam of the
    // best first splits and keep the best completed assembly
    size_t beam = size_t(depth == 0 ? kBisectBeam : kBisectBeamSub);
    size_t beam_cap = size_t(depth == 0 ? kBisectBeamCap : kBisectBeamSubCap);
    size_t tries = std::min(ranked.size(), beam);
    // first-split cuts tie in droves on structured clusters; slicing a tie
    // block mid-way would pick by mask value, so take the whole block
    while (tries < ranked.size() && tries < beam_cap &&
           ranked[tries].first == ranked[tries - 1].first)
      ++tries;
    double best_total = 0;
    bool have = false;
    std::vector<std::vector<int>> best_groups;
    for (size_t t = 0; t < tries; ++t) {
      // sub-cuts only add, so once the first cut alone is no better than the
      // incumbent total nothing later in the ranking can win
      if (have && obj == CutObjective::Min && ranked[t].first >= best_total) break;
      if (t > 0 && (budget <= 0 && have)) break;
      if (t > 0 && budget <= -kBisectBudget) break;  // hard stop even with no result
      std::vector<int> s1, s2;
      for (int i = 0; i < n; ++i)
        (ranked[t].second >> i & 1 ? s1 : s2).push_back(region.nodes[i]);
      Region r1, r2;
      r1.nodes = std::move(s1);
      r2.nodes = std::move(s2);
      for (int v : r1.nodes) r1.weight += g.weight[v];
      for (int v : r2.nodes) r2.weight += g.weight[v];
      std::vector<std::vector<int>> sub;
      try {
        double total = ranked[t].first;
        total += bisect(g, std::move(r1), k1, obj, cap, avg, sub, budget, depth + 1);
        total += bisect(g, std::move(r2), k2, obj, cap, avg, sub, budget, depth + 1);
        bool better =
            !have || (obj == CutObjective::Min ? total < best_total : total > best_total);
        if (better) {
          best_total = total;
          best_groups = std::move(sub);
          have = true;
        }
        // a 1+1 split has no sub-cuts, so the first completion is the best
        if (k1 == 1 && k2 == 1) break;
      } catch (const Unbalanced&) {
        continue;
      }
    }
    if (!have) throw Unbalanced{};
    for (auto& grp : best_groups) out.push_back(std::move(grp));
    return best_total;
  }

  // greedy growth toward the proportional target; only reached when the
  // coarsest graph is still large (big k), where exhaustive search is out
  double target = region.weight * double(k1) / double(k);
  std::vector<char> in(g.size(), 0);
  std::vector<double> conn(g.size(), 0.0);
  int seed_node = region.nodes[0];
  side1.push_back(seed_node);
  in[seed_node] = 1;
  double w1 = g.weight[seed_node];
  for (int v : region.nodes) conn[v] = g.beta[seed_node][v];
  while (int(side1.size()) < n - k2) {
    if (w1 >= target && int(side1.size()) >= k1) break;
    int pick = -1;
    for (int v : region.nodes) {
      if (in[v]) continue;
      if (pick < 0 ||
          (obj == CutObjective::Min ? conn[v] > conn[pick] : conn[v] < conn[pick]))
        pick = v;
    }
    if (pick < 0) break;
    if (w1 + g.weight[pick] > hi && int(side1.size()) >= k1) break;
    in[pick] = 1;
    side1.push_back(pick);
    w1 += g.weight[pick];
    for (int v : region.nodes)
      if (!in[v]) conn[v] += g.beta[pick][v];
  }
  for (int v : region.nodes)
    if (!in[v]) side2.push_back(v);
  if (w1 < lo || w1 > hi || int(side1.size()) < k1 || int(side2.size()) < k2)
    throw Unbalanced{};
  std::sort(side1.begin(), side1.end());
  std::sort(side2.begin(), side2.end());

  Region r1, r2;
  r1.nodes = std::move(side1);
  r2.nodes = std::move(side2);
  for (int v : r1.nodes) r1.weight += g.weight[v];
  for (int v : r2.nodes) r2.weight += g.weight[v];
  double total = cross_weight(g, r1.nodes, r2.nodes);
  total += bisect(g, std::move(r1), k1, obj, cap, avg, out, budget, depth + 1);
  total += bisect(g, std::move(r2), k2, obj, cap, avg, out, budget, depth + 1);
  return total;
}

// pairwise-swap refinement; swaps preserve group sizes so balance moves only
// through weight differences
void kl_refine(const DeviceGraph& g, std::vector<std::vector<int>>& groups,
               CutObjective obj, double cap, double avg) {
  int k = int(groups.size());
  int n = g.size();
  std::vector<int> grp_of(n, -1);
  for (int gi = 0; gi < k; ++gi)
    for (int v : groups[gi]) grp_of[v] = gi;
  std::vector<double> gw(k, 0);
  for (int gi = 0; gi < k; ++gi)
    for (int v : groups[gi]) gw[gi] += g.weight[v];

  // conn[v][gi] = total bandwidth from v into group gi
  std::vector<std::vector<double>> conn(n, std::vector<double>(k, 0.0));
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (u != v) conn[u][grp_of[v]] += g.beta[u][v];

  double sign = obj == CutObjective::Min ? 1.0 : -1.0;
  for (int pass = 0; pass < kKlMaxPasses; ++pass) {
    bool any = false;
    while (true) {
      double best_gain = 0;
      int bu = -1, bv = -1;
      for (int u = 0; u < n; ++u) {
        for (int v = u + 1; v < n; ++v) {
          int a = grp_of[u], b = grp_of[v];
          if (a == b) continue;
          double gain =
              sign * (conn[u][b] - conn[u][a] + conn[v][a] - conn[v][b] -
                      2.0 * g.beta[u][v]);
          if (gain <= best_gain + 1e-12 * (1.0 + std::abs(best_gain))) continue;
          double wa = gw[a] - g.weight[u] + g.weight[v];
          double wb = gw[b] - g.weight[v] + g.weight[u];
          if (wa > cap * avg || wb > cap * avg) continue;
          best_gain = gain;
          bu = u;
          bv = v;
        }
      }
      if (bu < 0) break;
      int a = grp_of[bu], b = grp_of[bv];
      gw[a] += g.weight[bv] - g.weight[bu];
      gw[b] += g.weight[bu] - g.weight[bv];
      grp_of[bu] = b;
      grp_of[bv] = a;
      for (int x = 0; x < n; ++x) {
        if (x == bu || x == bv) continue;
        conn[x][a] += g.beta[x][bv] - g.beta[x][bu];
        conn[x][b] += g.beta[x][bu] - g.beta[x][bv];
      }
      conn[bu][a] += g.beta[bu][bv];
      conn[bu][b] -= g.beta[bu][bv];
      conn[bv][b] += g.beta[bu][bv];
      conn[bv][a] -= g.beta[bu][bv];
      any = true;
    }
    if (!any) break;
  }

  for (auto& grp : groups) grp.clear();
  for (int v = 0; v < n; ++v) groups[grp_of[v]].push_back(v);
  for (auto& grp : groups) std::sort(grp.begin(), grp.end());
}

std::vector<std::vector<int>> run_multilevel(const std::vector<CoarseLevel>& ladder,
                                             int k, CutObjective obj, double cap,
                                             double avg) {
  auto groups = initial_partition(ladder.back().g, k, obj, cap, avg);
  for (int lvl = int(ladder.size()) - 1; lvl >= 0; --lvl) {
    kl_refine(ladder[lvl].g, groups, obj, cap, avg);
    if (lvl > 0) {
      // project supernodes onto the finer level
      for (auto& grp : groups) {
        std::vector<int> fine;
        for (int v : grp) {
          fine.push_back(ladder[lvl].from[v][0]);
          if (ladder[lvl].from[v][1] >= 0) fine.push_back(ladder[lvl].from[v][1]);
        }
        std::sort(fine.begin(), fine.end());
        grp = std::move(fine);
      }
    }
  }
  return groups;
}

}  // namespace

double cut_value(const DeviceGraph& g, const std::vector<std::vector<int>>& groups) {
  auto pos = position_map(g);
  double s = 0;
  for (size_t a = 0; a < groups.size(); ++a)
    for (size_t b = a + 1; b < groups.size(); ++b)
      for (int u : groups[a])
        for (int v : groups[b]) s += g.beta[pos[u]][pos[v]];
  return s;
}

double balance_factor(const DeviceGraph& g, const std::vector<std::vector<int>>& groups) {
  auto pos = position_map(g);
  double total = 0, worst = 0;
  for (const auto& grp : groups) {
    double w = group_weight(g, grp, pos);
    worst = std::max(worst, w);
    total += w;
  }
  if (total <= 0) return 1.0;
  return worst / (total / double(groups.size()));
}

std::vector<CoarseLevel> coarsen(const DeviceGraph& g, int k, std::uint64_t seed) {
  std::vector<CoarseLevel> ladder;
  CoarseLevel base;
  base.g.verts.resize(g.size());
  std::iota(base.g.verts.begin(), base.g.verts.end(), 0);
  base.g.weight = g.weight;
  base.g.beta = g.beta;
  base.from.resize(g.size());
  for (int i = 0; i < g.size(); ++i) base.from[i] = {i, -1};
  ladder.push_back(std::move(base));

  int floor_n = std::max(2 * k, kCoarsenFloor);
  // merged supernodes heavier than one balanced share would make the balance
  // cap unreachable no matter how the coarse graph is split
  double total = std::accumulate(g.weight.begin(), g.weight.end(), 0.0);
  double weight_cap = total / double(k);
  // members per supernode; summed edges grow with size, so matching rates
  // edges by bandwidth per member pair or big blobs swallow everything
  std::vector<int> members(g.size(), 1);
  std::mt19937_64 rng(seed);
  while (ladder.back().g.size() > floor_n) {
    const DeviceGraph& cur = ladder.back().g;
    int n = cur.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    auto rate_of = [&](int v, int u) {
      return cur.beta[v][u] / (double(members[v]) * double(members[u]));
    };
    std::vector<double> top_rate(n, 0.0);
    for (int v = 0; v < n; ++v)
      for (int u = 0; u < n; ++u)
        if (u != v && cur.beta[v][u] > 0) top_rate[v] = std::max(top_rate[v], rate_of(v, u));

    std::vector<int> mate(n, -1);
    int merges = 0;
    for (int v : order) {
      if (mate[v] >= 0) continue;
      int best = -1;
      double best_rate = 0;
      for (int u = 0; u < n; ++u) {
        if (u == v || mate[u] >= 0 || cur.beta[v][u] <= 0) continue;
        if (cur.weight[v] + cur.weight[u] > weight_cap) continue;
        double rate = rate_of(v, u);
        if (rate < kMatchAdmission * std::max(top_rate[v], top_rate[u])) continue;
        if (best < 0 || rate > best_rate) {
          best = u;
          best_rate = rate;
        }
      }
      if (best >= 0 && n - merges - 1 >= floor_n) {
        mate[v] = best;
        mate[best] = v;
        ++merges;
      }
    }
    if (merges == 0) break;

    // supernodes ordered by their smallest member, weights and edges summed
    CoarseLevel next;
    std::vector<int> super_of(n, -1);
    for (int v = 0; v < n; ++v) {
      if (super_of[v] >= 0) continue;
      int id = int(next.from.size());
      if (mate[v] >= 0 && mate[v] > v) {
        next.from.push_back({v, mate[v]});
        super_of[v] = super_of[mate[v]] = id;
      } else if (mate[v] < 0) {
        next.from.push_back({v, -1});
        super_of[v] = id;
      } else {
        // mate[v] < v already handled when we visited the mate
        continue;
      }
    }
    int m = int(next.from.size());
    next.g.verts.resize(m);
    std::iota(next.g.verts.begin(), next.g.verts.end(), 0);
    next.g.weight.assign(m, 0.0);
    next.g.beta.assign(m, std::vector<double>(m, 0.0));
    for (int v = 0; v < n; ++v) next.g.weight[super_of[v]] += cur.weight[v];
    for (int v = 0; v < n; ++v)
      for (int u = v + 1; u < n; ++u) {
        int sv = super_of[v], su = super_of[u];
        if (sv == su) continue;
        next.g.beta[sv][su] += cur.beta[v][u];
        next.g.beta[su][sv] += cur.beta[v][u];
      }
    std::vector<int> next_members(m, 0);
    for (int v = 0; v < n; ++v) next_members[super_of[v]] += members[v];
    members = std::move(next_members);
    ladder.push_back(std::move(next));
  }
  return ladder;
}

std::vector<std::vector<int>> initial_partition(const DeviceGraph& coarsest, int k,
                                                CutObjective obj, double cap,
                                                double avg_target) {
  Region all;
  all.nodes.resize(coarsest.size());
  std::iota(all.nodes.begin(), all.nodes.end(), 0);
  for (int v : all.nodes) all.weight += coarsest.weight[v];
  std::vector<std::vector<int>> out;
  long long budget = kBisectBudget;
  bisect(coarsest, std::move(all), k, obj, cap, avg_target, out, budget);
  return out;
}

Partition partition_graph(const DeviceGraph& g, int k, CutObjective obj,
                          double balance_cap, std::uint64_t seed) {
  int n = g.size();
  if (k < 1 || k > n)
    throw InvalidArgument("partition count must be between 1 and the vertex count");
  Partition part;
  if (k == 1) {
    part.groups.push_back(g.verts);
    std::sort(part.groups[0].begin(), part.groups[0].end());
    part.cap_used = balance_cap;
    return part;
  }

  auto ladder = coarsen(g, k, seed);
  double total = std::accumulate(g.weight.begin(), g.weight.end(), 0.0);
  double avg = total / double(k);

  std::vector<double> caps;
  for (double c = balance_cap; c < 2.0 * balance_cap; c *= 1.1) caps.push_back(c);
  caps.push_back(2.0 * balance_cap);

  for (double cap : caps) {
    try {
      auto groups = run_multilevel(ladder, k, obj, cap, avg);
      for (auto& grp : groups) {
        for (int& v : grp) v = g.verts[v];
        std::sort(grp.begin(), grp.end());
      }
      std::sort(groups.begin(), groups.end(),
                [](const std::vector<int>& a, const std::vector<int>& b) {
                  return a.front() < b.front();
                });
      part.groups = std::move(groups);
      part.cap_used = cap;
      return part;
    } catch (const Unbalanced&) {
      continue;
    }
  }
  throw Infeasible("unbalanceable: no " + std::to_string(k) +
                   "-way split within balance cap " + std::to_string(balance_cap) +
                   " (relaxed up to x2)");
}

Partition random_partition(const DeviceGraph& g, int k, double balance_cap,
                           std::uint64_t seed) {
  int n = g.size();
  if (k < 1 || k > n)
    throw InvalidArgument("partition count must be between 1 and the vertex count");
  std::mt19937_64 rng(seed);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double total = std::accumulate(g.weight.begin(), g.weight.end(), 0.0);
  double avg = total / double(k);

  auto assemble = [&](const std::vector<int>& order) {
    std::vector<std::vector<int>> groups(k);
    std::vector<double> gw(k, 0.0);
    for (int v : order) {
      int lightest = 0;
      for (int gi = 1; gi < k; ++gi)
        if (gw[gi] < gw[lightest]) lightest = gi;
      groups[lightest].push_back(v);
      gw[lightest] += g.weight[v];
    }
    return groups;
  };

  std::vector<std::vector<int>> groups;
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::shuffle(perm.begin(), perm.end(), rng);
    auto cand = assemble(perm);
    double worst = 0;
    for (int gi = 0; gi < k; ++gi) {
      double w = 0;
      for (int v : cand[gi]) w += g.weight[v];
      worst = std::max(worst, w);
    }
    if (worst <= balance_cap * avg) {
      groups = std::move(cand);
      break;
    }
  }
  if (groups.empty()) {
    // weight-sorted fallback; may exceed the cap but always answers
    std::sort(perm.begin(), perm.end(), [&](int a, int b) {
      return g.weight[a] != g.weight[b] ? g.weight[a] > g.weight[b] : a < b;
    });
    groups = assemble(perm);
  }

  Partition part;
  part.groups = std::move(groups);
  for (auto& grp : part.groups) {
    for (int& v : grp) v = g.verts[v];
    std::sort(grp.begin(), grp.end());
  }
  std::sort(part.groups.begin(), part.groups.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) {
              return a.front() < b.front();
            });
  part.cap_used = balance_cap;
  return part;
}

}  // namespace hexplan
