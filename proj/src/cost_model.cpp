#include "cost_model.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace hexplan {

double activation_bytes(const ModelSpec& m, std::int64_t micro_batch) {
  return double(micro_batch) * double(m.seq_len) * double(m.hidden_dim) *
         double(m.bytes_per_element);
}

// dense fwd+bwd FLOPs for one layer at one sample... folded constant 96 covers
// the 6x (fwd + 2x bwd) of the 16*S*H^2 matmul volume, attention term via S/6H
static double layer_flops(const ModelSpec& m, double batch) {
  return 96.0 * batch * double(m.seq_len) * double(m.hidden_dim) *
         double(m.hidden_dim) *
         (1.0 + double(m.seq_len) / (6.0 * double(m.hidden_dim)));
}

double comm_tp_layer(const StagePlan& st, std::int64_t micro_batch,
                     const ModelSpec& m, const ClusterSpec& c) {
  int t = int(st.devices.size());
  if (t <= 1) return 0.0;
  double payload = activation_bytes(m, micro_batch);
  double worst = 0.0;
  for (int d : st.devices) {
    double s = 0.0;
    for (int e : st.devices) {
      if (e == d) continue;
      s += c.latency[d][e] + payload / (double(t) * c.bandwidth[d][e]);
    }
    worst = std::max(worst, s);
  }
  // 4 allreduces per layer per fwd+bwd, each ~2x payload in ring slices: 12 ~=
  // 4 * 2 * 1.5 effective rounds under the slice accounting used throughout
  return 12.0 * worst;
}

double comm_dp_layer(const DpGroup& g, const ModelSpec& m, const ClusterSpec& c) {
  int r = int(g.members.size());
  if (r <= 1) return 0.0;
  double volume = 12.0 * double(m.hidden_dim) * double(m.hidden_dim) *
                  double(m.bytes_per_element);
  double worst = 0.0;
  for (int d : g.members) {
    double s = 0.0;
    for (int e : g.members) {
      if (e == d) continue;
      s += c.latency[d][e] + volume / (double(r) * c.bandwidth[d][e]);
    }
    worst = std::max(worst, s);
  }
  return 2.0 * worst;
}

double comm_pp_hop(const StagePlan& from, const StagePlan& to,
                   std::int64_t micro_batch, const ModelSpec& m,
                   const ClusterSpec& c) {
  double payload = activation_bytes(m, micro_batch);
  int tn = int(to.devices.size());
  double best = kInf;
  for (int d : from.devices) {
    for (int entry : to.devices) {
      double cost = c.latency[d][entry] + payload / c.bandwidth[d][entry];
      for (int e : to.devices) {
        if (e == entry) continue;
        cost += c.latency[entry][e] + payload / (double(tn) * c.bandwidth[entry][e]);
      }
      best = std::min(best, cost);
    }
  }
  return 2.0 * best;  // activations forward, gradients back
}

double comp_tp_layer(const StagePlan& st, std::int64_t micro_batch,
                     const ModelSpec& m, const ClusterSpec& c) {
  if (st.devices.empty()) return kInf;
  double c0 = c.devices[st.devices[0]].peak_flops;
  for (int d : st.devices) {
    if (c.devices[d].peak_flops != c0)
      throw InvalidArgument("mixed-type tensor parallel stage");
  }
  return layer_flops(m, double(micro_batch)) /
         (c0 * double(st.devices.size()));
}

double stage_time(const StagePlan& st, std::int64_t micro_batch,
                  const ModelSpec& m, const ClusterSpec& c) {
  return double(st.layer_count) *
         (comp_tp_layer(st, micro_batch, m, c) + comm_tp_layer(st, micro_batch, m, c));
}

double pipeline_time(const PipelinePlan& p, const ModelSpec& m,
                     const ClusterSpec& c) {
  if (p.stages.empty()) return kInf;
  std::int64_t n = p.num_micro_batches();
  if (n <= 0 || p.batch % p.micro_batch != 0) return kInf;
  double fill = 0.0, bottleneck = 0.0;
  for (size_t j = 0; j < p.stages.size(); ++j) {
    double s = stage_time(p.stages[j], p.micro_batch, m, c);
    double h = (j + 1 < p.stages.size())
                   ? comm_pp_hop(p.stages[j], p.stages[j + 1], p.micro_batch, m, c)
                   : 0.0;
    fill += s + h;
    bottleneck = std::max(bottleneck, s + h);
  }
  return fill + double(n - 1) * bottleneck;
}

double comm_dp(const ExecutionPlan& plan, const ModelSpec& m,
               const ClusterSpec& c) {
  if (plan.dp_groups.empty()) return 0.0;
  // one sync per layer; a stage pays for the layers it hosts, the slowest
  // stage anywhere bounds the overlapped sync window
  double worst = 0.0;
  for (const auto& p : plan.pipelines) {
    for (const auto& st : p.stages) {
      double s = 0.0;
      for (int l = st.layer_start; l < st.layer_start + st.layer_count; ++l)
        s += comm_dp_layer(plan.dp_groups[l], m, c);
      worst = std::max(worst, s);
    }
  }
  return worst;
}

MemoryReport mem_check(const ExecutionPlan& plan, const ModelSpec& m,
                       const ClusterSpec& c, double state_multiplier) {
  MemoryReport r;
  r.per_device.assign(c.devices.size(), 0.0);
  double params = 48.0 * double(m.hidden_dim) * double(m.hidden_dim) *
                  double(m.bytes_per_element);
  for (const auto& p : plan.pipelines) {
    double act = activation_bytes(m, p.micro_batch);
    for (const auto& st : p.stages) {
      double per = double(st.layer_count) *
                   (params / double(st.devices.size()) + act) * state_multiplier;
      for (int d : st.devices) r.per_device[d] += per;
    }
  }
  for (size_t d = 0; d < r.per_device.size(); ++d) {
    double over = r.per_device[d] - c.devices[d].memory_bytes;
    if (over > 0 && over > r.worst_overage) {
      r.worst_overage = over;
      r.worst_device = int(d);
    }
    if (over > 0) r.fits = false;
  }
  return r;
}

void build_dp_groups(ExecutionPlan& plan, const ModelSpec& m) {
  plan.dp_groups.assign(size_t(m.num_layers), DpGroup{});
  for (std::int64_t l = 0; l < m.num_layers; ++l) plan.dp_groups[l].layer = int(l);
  for (const auto& p : plan.pipelines) {
    for (const auto& st : p.stages) {
      for (int l = st.layer_start; l < st.layer_start + st.layer_count; ++l)
        plan.dp_groups[l].members.push_back(st.devices[0]);
    }
  }
}

void validate_plan(const ExecutionPlan& plan, const ModelSpec& m,
                   const ClusterSpec& c) {
  if (plan.pipelines.empty()) throw InvalidArgument("plan has no pipelines");
  if (plan.global_batch < 1) throw InvalidArgument("plan has no batch");
  std::vector<char> used(c.devices.size(), 0);
  std::int64_t batch_sum = 0;
  for (const auto& p : plan.pipelines) {
    if (p.stages.empty()) throw InvalidArgument("pipeline has no stages");
    if (p.micro_batch < 1 || p.batch < p.micro_batch)
      throw InvalidArgument("pipeline batch smaller than its micro batch");
    if (p.batch % p.micro_batch != 0)
      throw InvalidArgument("pipeline batch not a micro batch multiple");
    batch_sum += p.batch;
    int next_layer = 0;
    for (const auto& st : p.stages) {
      if (st.devices.empty()) throw InvalidArgument("stage has no devices");
      if (st.tp != int(st.devices.size()))
        throw InvalidArgument("stage tp degree does not match its device count");
      if (st.layer_count < 1) throw InvalidArgument("stage holds no layers");
      if (st.layer_start != next_layer)
        throw InvalidArgument("stages do not tile the layer range");
      next_layer += st.layer_count;
      for (int d : st.devices) {
        if (d < 0 || d >= int(c.devices.size()))
          throw InvalidArgument("stage references an unknown device");
        if (used[d]) throw InvalidArgument("device appears in two stages");
        used[d] = 1;
      }
    }
    if (next_layer != m.num_layers)
      throw InvalidArgument("pipeline does not cover all layers");
  }
  if (batch_sum != plan.global_batch)
    throw InvalidArgument("pipeline batches do not sum to the global batch");
  if (plan.dp_groups.size() != size_t(m.num_layers))
    throw InvalidArgument("dp groups do not cover all layers");
  for (size_t l = 0; l < plan.dp_groups.size(); ++l) {
    if (plan.dp_groups[l].layer != int(l))
      throw InvalidArgument("dp group layer index out of order");
    if (plan.dp_groups[l].members.size() != plan.pipelines.size())
      throw InvalidArgument("dp group missing a pipeline replica");
  }
}

CostReport iteration_time(const ExecutionPlan& plan, const ModelSpec& m,
                          const ClusterSpec& c, double state_multiplier) {
  validate_plan(plan, m, c);
  CostReport r;
  r.per_pipeline.resize(plan.pipelines.size());
  r.memory = mem_check(plan, m, c, state_multiplier);
  int worst_i = 0;
  for (size_t i = 0; i < plan.pipelines.size(); ++i) {
    r.per_pipeline[i] = pipeline_time(plan.pipelines[i], m, c);
    if (r.per_pipeline[i] > r.per_pipeline[worst_i]) worst_i = int(i);
  }
  r.dp_comm = comm_dp(plan, m, c);

  bool finite = std::isfinite(r.per_pipeline[worst_i]) && std::isfinite(r.dp_comm);
  if (!r.memory.fits || !finite) {
    r.feasible = false;
    r.total = kInf;
    r.mfu = 0.0;
    return r;
  }

  // breakdown along the critical pipeline's bottleneck stage; the parts sum
  // back to total (bubble absorbs the fill/drain remainder)
  const auto& p = plan.pipelines[worst_i];
  std::int64_t n = p.num_micro_batches();
  double fill = 0.0;
  size_t b = 0;
  double bott = -1.0;
  std::vector<double> s(p.stages.size()), h(p.stages.size(), 0.0);
  for (size_t j = 0; j < p.stages.size(); ++j) {
    s[j] = stage_time(p.stages[j], p.micro_batch, m, c);
    if (j + 1 < p.stages.size())
      h[j] = comm_pp_hop(p.stages[j], p.stages[j + 1], p.micro_batch, m, c);
    fill += s[j] + h[j];
    if (s[j] + h[j] > bott) {
      bott = s[j] + h[j];
      b = j;
    }
  }
  double nl = double(n) * double(p.stages[b].layer_count);
  r.compute = nl * comp_tp_layer(p.stages[b], p.micro_batch, m, c);
  r.tp_comm = nl * comm_tp_layer(p.stages[b], p.micro_batch, m, c);
  r.pp_comm = double(n) * h[b];
  r.bubble = fill - (s[b] + h[b]);
  r.total = r.per_pipeline[worst_i] + r.dp_comm;
  r.feasible = true;
  r.mfu = model_flops_utilization(r.total, plan.global_batch, m, c);
  return r;
}

double model_flops_utilization(double iteration_seconds, std::int64_t global_batch,
                               const ModelSpec& m, const ClusterSpec& c) {
  if (!(iteration_seconds > 0) || !std::isfinite(iteration_seconds)) return 0.0;
  double useful = 0.75 * layer_flops(m, double(global_batch)) * double(m.num_layers);
  return useful / (iteration_seconds * c.total_flops());
}

}  // namespace hexplan
