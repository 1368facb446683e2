#include "report.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace hexplan {

using json = nlohmann::ordered_json;

std::string artifact_version() { return "hexplan 0.1.0"; }

namespace {

json id_list(const std::vector<int>& idxs, const ClusterSpec& c) {
  json out = json::array();
  for (int i : idxs)
    out.push_back(i >= 0 && i < int(c.devices.size()) ? json(c.devices[i].id)
                                                      : json(i));
  return out;
}

json plan_to_json(const ExecutionPlan& plan, const ClusterSpec& c) {
  json j;
  j["global_batch"] = plan.global_batch;
  j["pipelines"] = json::array();
  for (const auto& p : plan.pipelines) {
    json jp;
    jp["batch"] = p.batch;
    jp["micro_batch"] = p.micro_batch;
    jp["num_micro_batches"] = p.num_micro_batches();
    jp["stages"] = json::array();
    for (const auto& s : p.stages) {
      json js;
      js["devices"] = id_list(s.devices, c);
      js["tp"] = s.tp;
      js["layer_start"] = s.layer_start;
      js["layer_count"] = s.layer_count;
      jp["stages"].push_back(std::move(js));
    }
    j["pipelines"].push_back(std::move(jp));
  }
  j["dp_groups"] = json::array();
  for (const auto& g : plan.dp_groups) {
    json jg;
    jg["layer"] = g.layer;
    jg["members"] = id_list(g.members, c);
    j["dp_groups"].push_back(std::move(jg));
  }
  return j;
}

json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

std::string serialize_plan(const ExecutionPlan& plan, const ClusterSpec& c) {
  return plan_to_json(plan, c).dump(2) + "\n";
}

std::string serialize_report(const CostReport& report, const ClusterSpec& c) {
  json j;
  j["feasible"] = report.feasible;
  j["total"] = finite_or_null(report.total);
  j["compute"] = report.compute;
  j["tp_comm"] = report.tp_comm;
  j["dp_comm"] = report.dp_comm;
  j["pp_comm"] = report.pp_comm;
  j["bubble"] = report.bubble;
  j["mfu"] = report.mfu;
  j["per_pipeline"] = json::array();
  for (double t : report.per_pipeline) j["per_pipeline"].push_back(finite_or_null(t));
  j["per_device_memory"] = json::array();
  for (size_t i = 0; i < report.memory.per_device.size() && i < c.devices.size(); ++i) {
    json jm;
    jm["device"] = c.devices[i].id;
    jm["bytes"] = static_cast<std::int64_t>(std::llround(report.memory.per_device[i]));
    j["per_device_memory"].push_back(std::move(jm));
  }
  j["memory_fits"] = report.memory.fits;
  j["memory_worst_overage"] =
      static_cast<std::int64_t>(std::llround(report.memory.worst_overage));
  j["memory_worst_device"] =
      report.memory.worst_device >= 0 && report.memory.worst_device < int(c.devices.size())
          ? json(c.devices[report.memory.worst_device].id)
          : json(nullptr);
  return j.dump(2) + "\n";
}

std::string serialize_trace(const std::vector<IterationTrace>& trace) {
  json j = json::array();
  for (const auto& t : trace) {
    json jt;
    jt["iteration"] = t.iteration;
    jt["d_dp"] = t.d_dp;
    jt["objective"] = t.objective == 'n' ? "min" : "max";
    jt["candidate_cost"] = finite_or_null(t.candidate_cost);
    jt["candidate_mfu"] = t.candidate_mfu;
    jt["best_cost"] = finite_or_null(t.best_cost);
    jt["best_mfu"] = t.best_mfu;
    jt["ema_pipeline"] = t.ema_pipeline;
    jt["ema_dp"] = t.ema_dp;
    jt["feasible"] = t.feasible;
    j.push_back(std::move(jt));
  }
  return j.dump(2) + "\n";
}

std::string serialize_manifest(const RunManifest& man, bool embedded) {
  json j;
  j["version"] = man.version.empty() ? artifact_version() : man.version;
  j["command"] = man.command;
  j["inputs"] = json::array();
  for (const auto& [path, digest] : man.input_digests) {
    json ji;
    ji["path"] = path;
    ji["digest"] = digest;
    j["inputs"].push_back(std::move(ji));
  }
  j["seed"] = man.seed;
  if (!man.config_json.empty()) {
    j["config"] = json::parse(man.config_json);
  } else {
    j["config"] = json::object();
  }
  // left out of embedded copies so identical inputs give identical artifacts
  if (!embedded) j["runtime_ms"] = man.runtime_ms;
  return j.dump(2) + "\n";
}

std::string render_table(const ExecutionPlan& plan, const CostReport& report,
                         const ClusterSpec& c, const ModelSpec& m) {
  std::ostringstream os;
  os << std::fixed;
  os << "model: " << m.num_layers << " layers, hidden " << m.hidden_dim
     << ", seq " << m.seq_len << ", " << m.bytes_per_element
     << " B/elem; cluster: " << c.devices.size() << " devices on "
     << c.machines.size() << " machines\n";
  os << "plan: " << plan.pipelines.size() << " pipeline"
     << (plan.pipelines.size() == 1 ? "" : "s") << ", global batch "
     << plan.global_batch << "\n\n";
  os << std::setw(9) << "pipeline" << std::setw(7) << "stage" << std::setw(12)
     << "layers" << std::setw(5) << "tp" << std::setw(7) << "batch"
     << std::setw(7) << "micro" << "  devices\n";
  for (size_t pi = 0; pi < plan.pipelines.size(); ++pi) {
    const auto& p = plan.pipelines[pi];
    for (size_t si = 0; si < p.stages.size(); ++si) {
      const auto& s = p.stages[si];
      std::ostringstream range;
      range << s.layer_start << ".." << (s.layer_start + s.layer_count - 1);
      std::ostringstream devs;
      for (size_t di = 0; di < s.devices.size(); ++di) {
        if (di) devs << ",";
        int d = s.devices[di];
        if (d >= 0 && d < int(c.devices.size()))
          devs << c.devices[d].id;
        else
          devs << d;
      }
      os << std::setw(9) << pi << std::setw(7) << si << std::setw(12)
         << range.str() << std::setw(5) << s.tp << std::setw(7) << p.batch
         << std::setw(7) << p.micro_batch << "  " << devs.str() << "\n";
    }
  }
  os << "\n";
  os << std::setprecision(6);
  if (report.feasible) {
    os << "time " << report.total << " s  (compute " << report.compute
       << ", tp " << report.tp_comm << ", pp " << report.pp_comm << ", bubble "
       << report.bubble << ", dp " << report.dp_comm << ")\n";
    os << std::setprecision(2) << "mfu " << report.mfu * 100.0 << "%\n";
  } else {
    os << "infeasible: exceeds device memory\n";
  }
  if (!report.memory.per_device.empty()) {
    size_t worst = 0;
    for (size_t i = 1; i < report.memory.per_device.size(); ++i)
      if (report.memory.per_device[i] > report.memory.per_device[worst]) worst = i;
    std::string dev_name = worst < c.devices.size()
                               ? c.devices[worst].id
                               : std::to_string(worst);
    os << std::setprecision(2) << "memory peak "
       << report.memory.per_device[worst] / (1024.0 * 1024.0 * 1024.0)
       << " GiB on device " << dev_name
       << (report.memory.fits ? " (fits)" : " (over budget)") << "\n";
  }
  return os.str();
}

}  // namespace hexplan
