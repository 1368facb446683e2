#include "synth.hpp"

#include <random>
#include <sstream>

#include "errors.hpp"
#include "json.hpp"
#include "json_io.hpp"
#include "util.hpp"

namespace hexplan {

using json = nlohmann::ordered_json;

std::string synthetic_cluster_json(int num_gpus, std::uint64_t seed) {
  if (num_gpus < 8 || num_gpus % 8 != 0)
    throw InvalidArgument("synthetic cluster size must be a positive multiple of 8");
  int machines = num_gpus / 8;
  int fast = std::max(1, machines / 10);
  int mid = std::max(1, int(0.55 * double(machines - fast) + 0.5));
  if (fast + mid > machines) mid = machines - fast;
  int low = machines - fast - mid;

  std::mt19937_64 rng(splitmix64(seed ^ 0x5e17c0de));
  std::uniform_real_distribution<double> jitter(0.95, 1.05);

  json j;
  j["devices"] = json::array();
  j["machines"] = json::object();
  int dev = 0;
  auto add_machine = [&](const std::string& name, double bw, double lat_us,
                         double mem_gib, double tflops) {
    json mj;
    mj["intra_bandwidth_gbps"] = bw * jitter(rng);
    mj["intra_latency_us"] = lat_us;
    j["machines"][name] = mj;
    for (int g = 0; g < 8; ++g) {
      json dj;
      std::ostringstream id;
      id << name << "-g" << g;
      dj["id"] = id.str();
      dj["machine"] = name;
      dj["memory_gib"] = mem_gib;
      dj["peak_tflops"] = tflops;
      j["devices"].push_back(dj);
      ++dev;
    }
  };
  for (int i = 0; i < fast; ++i)
    add_machine("fast" + std::to_string(i), 200.0, 10.0, 80.0, 312.0);
  for (int i = 0; i < mid; ++i)
    add_machine("mid" + std::to_string(i), 32.0, 500.0, 24.0, 165.0);
  for (int i = 0; i < low; ++i)
    add_machine("low" + std::to_string(i), 16.0, 800.0, 24.0, 71.0);
  (void)dev;

  j["inter"] = {{"bandwidth_gbps", 12.0}, {"latency_us", 1000.0}};
  j["overrides"] = json::array();
  return j.dump(2) + "\n";
}

ClusterSpec generate_synthetic_cluster(int num_gpus, std::uint64_t seed) {
  return parse_cluster(synthetic_cluster_json(num_gpus, seed));
}

}  // namespace hexplan
