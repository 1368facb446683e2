#include "json_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "errors.hpp"
#include "json.hpp"

namespace hexplan {

using json = nlohmann::ordered_json;

namespace {

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;
constexpr double kTera = 1e12;
constexpr double kGbps = 1e9;   // the files say "gbps" but mean gigaBYTES/s
constexpr double kMicro = 1e-6;

json parse_json(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError(std::string(what) + ": not valid JSON");
  return j;
}

double need_positive(const json& j, const char* key, const char* ctx) {
  if (!j.contains(key) || !j[key].is_number())
    throw ParseError(std::string(ctx) + ": missing numeric field '" + key + "'");
  double v = j[key].get<double>();
  if (!(v > 0)) throw ParseError(std::string(ctx) + ": '" + key + "' must be positive");
  return v;
}

double need_nonneg(const json& j, const char* key, const char* ctx) {
  if (!j.contains(key) || !j[key].is_number())
    throw ParseError(std::string(ctx) + ": missing numeric field '" + key + "'");
  double v = j[key].get<double>();
  if (v < 0) throw ParseError(std::string(ctx) + ": '" + key + "' must be >= 0");
  return v;
}

std::int64_t need_posint(const json& j, const char* key, const char* ctx) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw ParseError(std::string(ctx) + ": missing integer field '" + key + "'");
  std::int64_t v = j[key].get<std::int64_t>();
  if (v <= 0) throw ParseError(std::string(ctx) + ": '" + key + "' must be positive");
  return v;
}

}  // namespace

int ClusterSpec::device_index(const std::string& id) const {
  for (size_t i = 0; i < devices.size(); ++i)
    if (devices[i].id == id) return int(i);
  return -1;
}

int ClusterSpec::machine_index(const std::string& name) const {
  for (size_t i = 0; i < machines.size(); ++i)
    if (machines[i].name == name) return int(i);
  return -1;
}

std::vector<std::vector<int>> ClusterSpec::devices_by_machine() const {
  std::vector<std::vector<int>> out(machines.size());
  for (size_t i = 0; i < devices.size(); ++i)
    out[devices[i].machine].push_back(int(i));
  return out;
}

double ClusterSpec::total_flops() const {
  double s = 0;
  for (const auto& d : devices) s += d.peak_flops;
  return s;
}

ClusterSpec parse_cluster(const std::string& text,
                          std::vector<std::string>* warnings) {
  json j = parse_json(text, "cluster");
  ClusterSpec c;

  if (!j.contains("machines") || !j["machines"].is_object())
    throw ParseError("cluster: missing 'machines' object");
  for (auto& [name, mj] : j["machines"].items()) {
    MachineParams mp;
    mp.name = name;
    mp.intra_bandwidth = need_positive(mj, "intra_bandwidth_gbps", "machine") * kGbps;
    mp.intra_latency = need_nonneg(mj, "intra_latency_us", "machine") * kMicro;
    c.machines.push_back(std::move(mp));
  }

  if (!j.contains("devices") || !j["devices"].is_array() || j["devices"].empty())
    throw ParseError("cluster: missing or empty 'devices' array");
  std::set<std::string> seen;
  for (const auto& dj : j["devices"]) {
    Device d;
    if (!dj.contains("id") || !dj["id"].is_string())
      throw ParseError("device: missing string field 'id'");
    d.id = dj["id"].get<std::string>();
    if (!seen.insert(d.id).second)
      throw ParseError("device: duplicate id '" + d.id + "'");
    if (!dj.contains("machine") || !dj["machine"].is_string())
      throw ParseError("device '" + d.id + "': missing string field 'machine'");
    d.machine = c.machine_index(dj["machine"].get<std::string>());
    if (d.machine < 0)
      throw ParseError("device '" + d.id + "': unknown machine '" +
                       dj["machine"].get<std::string>() + "'");
    d.memory_bytes = need_positive(dj, "memory_gib", "device") * kGiB;
    d.peak_flops = need_positive(dj, "peak_tflops", "device") * kTera;
    c.devices.push_back(std::move(d));
  }

  if (!j.contains("inter") || !j["inter"].is_object())
    throw ParseError("cluster: missing 'inter' object");
  c.inter_bandwidth = need_positive(j["inter"], "bandwidth_gbps", "inter") * kGbps;
  c.inter_latency = need_nonneg(j["inter"], "latency_us", "inter") * kMicro;

  // overrides apply to unordered device pairs; two entries for the same pair
  // with different values would describe an asymmetric link
  std::map<std::pair<int, int>, std::pair<double, double>> ov;
  if (j.contains("overrides")) {
    if (!j["overrides"].is_array()) throw ParseError("cluster: 'overrides' must be an array");
    for (const auto& oj : j["overrides"]) {
      LinkOverride o;
      if (!oj.contains("a") || !oj.contains("b") || !oj["a"].is_string() || !oj["b"].is_string())
        throw ParseError("override: needs string fields 'a' and 'b'");
      o.a = oj["a"].get<std::string>();
      o.b = oj["b"].get<std::string>();
      int ia = c.device_index(o.a), ib = c.device_index(o.b);
      if (ia < 0 || ib < 0)
        throw ParseError("override: unknown device '" + (ia < 0 ? o.a : o.b) + "'");
      if (ia == ib) throw ParseError("override: 'a' and 'b' must differ");
      o.bandwidth = need_positive(oj, "bandwidth_gbps", "override") * kGbps;
      o.latency = need_nonneg(oj, "latency_us", "override") * kMicro;
      std::pair<int, int> key = std::minmax(ia, ib);
      auto it = ov.find(key);
      if (it != ov.end() &&
          (it->second.first != o.bandwidth || it->second.second != o.latency))
        throw ParseError("override: asymmetric bandwidth on pair '" + o.a + "'/'" +
                         o.b + "'");
      ov[key] = {o.bandwidth, o.latency};
      c.overrides.push_back(std::move(o));
    }
  }

  size_t n = c.devices.size();
  c.bandwidth.assign(n, std::vector<double>(n, 0.0));
  c.latency.assign(n, std::vector<double>(n, 0.0));
  for (size_t a = 0; a < n; ++a) {
    for (size_t b = a + 1; b < n; ++b) {
      double bw, lat;
      if (c.devices[a].machine == c.devices[b].machine) {
        const auto& m = c.machines[c.devices[a].machine];
        bw = m.intra_bandwidth;
        lat = m.intra_latency;
      } else {
        bw = c.inter_bandwidth;
        lat = c.inter_latency;
      }
      auto it = ov.find({int(a), int(b)});
      if (it != ov.end()) {
        bw = it->second.first;
        lat = it->second.second;
      }
      c.bandwidth[a][b] = c.bandwidth[b][a] = bw;
      c.latency[a][b] = c.latency[b][a] = lat;
    }
  }

  if (warnings) {
    for (const auto& m : c.machines) {
      if (m.intra_bandwidth < c.inter_bandwidth)
        warnings->push_back("machine '" + m.name +
                            "' has intra bandwidth below the inter-machine link");
    }
  }
  return c;
}

ModelSpec parse_model(const std::string& text) {
  json j = parse_json(text, "model");
  ModelSpec m;
  m.num_layers = need_posint(j, "num_layers", "model");
  m.hidden_dim = need_posint(j, "hidden_dim", "model");
  m.seq_len = need_posint(j, "seq_len", "model");
  m.bytes_per_element = need_posint(j, "bytes_per_element", "model");
  return m;
}

std::string serialize_cluster(const ClusterSpec& c) {
  json j;
  j["devices"] = json::array();
  for (const auto& d : c.devices) {
    json dj;
    dj["id"] = d.id;
    dj["machine"] = c.machines[d.machine].name;
    dj["memory_gib"] = d.memory_bytes / kGiB;
    dj["peak_tflops"] = d.peak_flops / kTera;
    j["devices"].push_back(dj);
  }
  j["machines"] = json::object();
  for (const auto& m : c.machines) {
    json mj;
    mj["intra_bandwidth_gbps"] = m.intra_bandwidth / kGbps;
    mj["intra_latency_us"] = m.intra_latency / kMicro;
    j["machines"][m.name] = mj;
  }
  j["inter"] = {{"bandwidth_gbps", c.inter_bandwidth / kGbps},
                {"latency_us", c.inter_latency / kMicro}};
  // overrides normalized: lower device index first, sorted
  std::vector<LinkOverride> ovs = c.overrides;
  for (auto& o : ovs) {
    if (c.device_index(o.a) > c.device_index(o.b)) std::swap(o.a, o.b);
  }
  std::sort(ovs.begin(), ovs.end(), [&](const LinkOverride& x, const LinkOverride& y) {
    auto kx = std::make_pair(c.device_index(x.a), c.device_index(x.b));
    auto ky = std::make_pair(c.device_index(y.a), c.device_index(y.b));
    return kx < ky;
  });
  ovs.erase(std::unique(ovs.begin(), ovs.end(),
                        [&](const LinkOverride& x, const LinkOverride& y) {
                          return x.a == y.a && x.b == y.b;
                        }),
            ovs.end());
  j["overrides"] = json::array();
  for (const auto& o : ovs) {
    j["overrides"].push_back({{"a", o.a},
                              {"b", o.b},
                              {"bandwidth_gbps", o.bandwidth / kGbps},
                              {"latency_us", o.latency / kMicro}});
  }
  return j.dump(2) + "\n";
}

std::string serialize_model(const ModelSpec& m) {
  json j;
  j["num_layers"] = m.num_layers;
  j["hidden_dim"] = m.hidden_dim;
  j["seq_len"] = m.seq_len;
  j["bytes_per_element"] = m.bytes_per_element;
  return j.dump(2) + "\n";
}

SchedulerConfig parse_scheduler_config(const std::string& text,
                                       const SchedulerConfig& base) {
  json j = parse_json(text, "config");
  SchedulerConfig cfg = base;
  for (auto& [key, val] : j.items()) {
    if (key == "global_batch") cfg.global_batch = val.get<std::int64_t>();
    else if (key == "micro_batch_candidates") {
      cfg.micro_batch_candidates = val.get<std::vector<std::int64_t>>();
    } else if (key == "tau") cfg.tau = val.get<int>();
    else if (key == "balance_cap") cfg.balance_cap = val.get<double>();
    else if (key == "iterations") cfg.iterations = val.get<int>();
    else if (key == "ema_decay") cfg.ema_decay = val.get<double>();
    else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
    else if (key == "state_multiplier") cfg.state_multiplier = val.get<double>();
    else if (key == "threads") cfg.threads = val.get<int>();
    else if (key == "random_partition") cfg.random_partition = val.get<bool>();
    else throw ParseError("config: unknown key '" + key + "'");
  }
  if (cfg.global_batch < 1) throw ParseError("config: global_batch must be >= 1");
  if (cfg.iterations < 1) throw ParseError("config: iterations must be >= 1");
  if (cfg.micro_batch_candidates.empty())
    throw ParseError("config: micro_batch_candidates must be nonempty");
  for (auto mb : cfg.micro_batch_candidates)
    if (mb < 1) throw ParseError("config: micro batch candidates must be >= 1");
  if (!(cfg.ema_decay > 0 && cfg.ema_decay < 1))
    throw ParseError("config: ema_decay must be in (0, 1)");
  if (cfg.tau < 1) throw ParseError("config: tau must be >= 1");
  if (!(cfg.balance_cap >= 1.0)) throw ParseError("config: balance_cap must be >= 1");
  return cfg;
}

std::string serialize_scheduler_config(const SchedulerConfig& cfg) {
  json j;
  j["global_batch"] = cfg.global_batch;
  j["micro_batch_candidates"] = cfg.micro_batch_candidates;
  j["tau"] = cfg.tau;
  j["balance_cap"] = cfg.balance_cap;
  j["iterations"] = cfg.iterations;
  j["ema_decay"] = cfg.ema_decay;
  j["seed"] = cfg.seed;
  j["state_multiplier"] = cfg.state_multiplier;
  j["threads"] = cfg.threads;
  j["random_partition"] = cfg.random_partition;
  return j.dump();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hexplan
