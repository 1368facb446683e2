#include "doctest.h"

#include <string>
#include <vector>

#include "device_graph.hpp"
#include "errors.hpp"
#include "json_io.hpp"
#include "synth.hpp"
#include "types.hpp"

using namespace hexplan;

namespace {

const char* kTwoMachine = R"({
  "machines": {
    "A": {"intra_bandwidth_gbps": 200, "intra_latency_us": 10},
    "B": {"intra_bandwidth_gbps": 32, "intra_latency_us": 500}
  },
  "devices": [
    {"id": "a0", "machine": "A", "memory_gib": 80, "peak_tflops": 312},
    {"id": "a1", "machine": "A", "memory_gib": 80, "peak_tflops": 312},
    {"id": "b0", "machine": "B", "memory_gib": 24, "peak_tflops": 165}
  ],
  "inter": {"bandwidth_gbps": 12, "latency_us": 1000}
})";

}  // namespace

TEST_CASE("cluster parsing expands units and matrices") {
  ClusterSpec c = parse_cluster(kTwoMachine);
  REQUIRE(c.devices.size() == 3);
  REQUIRE(c.machines.size() == 2);

  CHECK(c.devices[0].id == "a0");
  CHECK(c.devices[2].id == "b0");
  CHECK(c.devices[0].machine == 0);
  CHECK(c.devices[2].machine == 1);
  CHECK(c.devices[0].memory_bytes == doctest::Approx(80.0 * 1024 * 1024 * 1024));
  CHECK(c.devices[0].peak_flops == doctest::Approx(312e12));
  CHECK(c.machines[0].intra_bandwidth == doctest::Approx(200e9));
  CHECK(c.machines[1].intra_latency == doctest::Approx(500e-6));
  CHECK(c.inter_bandwidth == doctest::Approx(12e9));
  CHECK(c.inter_latency == doctest::Approx(1e-3));

  // same machine -> intra link, different machines -> inter link
  CHECK(c.bandwidth[0][1] == doctest::Approx(200e9));
  CHECK(c.latency[0][1] == doctest::Approx(10e-6));
  CHECK(c.bandwidth[0][2] == doctest::Approx(12e9));
  CHECK(c.latency[1][2] == doctest::Approx(1e-3));
  // symmetry
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      CHECK(c.bandwidth[a][b] == c.bandwidth[b][a]);
      CHECK(c.latency[a][b] == c.latency[b][a]);
    }

  CHECK(c.device_index("a1") == 1);
  CHECK(c.device_index("zz") == -1);
  CHECK(c.machine_index("B") == 1);
  CHECK(c.total_flops() == doctest::Approx(312e12 * 2 + 165e12));
  auto bym = c.devices_by_machine();
  REQUIRE(bym.size() == 2);
  CHECK(bym[0] == std::vector<int>{0, 1});
  CHECK(bym[1] == std::vector<int>{2});
}

TEST_CASE("link overrides beat the machine defaults") {
  std::string doc = R"({
    "machines": {"A": {"intra_bandwidth_gbps": 100, "intra_latency_us": 10}},
    "devices": [
      {"id": "g0", "machine": "A", "memory_gib": 16, "peak_tflops": 100},
      {"id": "g1", "machine": "A", "memory_gib": 16, "peak_tflops": 100},
      {"id": "g2", "machine": "A", "memory_gib": 16, "peak_tflops": 100}
    ],
    "inter": {"bandwidth_gbps": 1, "latency_us": 100},
    "overrides": [
      {"a": "g0", "b": "g2", "bandwidth_gbps": 7, "latency_us": 3}
    ]
  })";
  ClusterSpec c = parse_cluster(doc);
  CHECK(c.bandwidth[0][2] == doctest::Approx(7e9));
  CHECK(c.bandwidth[2][0] == doctest::Approx(7e9));
  CHECK(c.latency[0][2] == doctest::Approx(3e-6));
  CHECK(c.bandwidth[0][1] == doctest::Approx(100e9));  // untouched

  // same pair again with different numbers describes an asymmetric link
  std::string bad = doc;
  bad.insert(bad.rfind(']'),
             R"(, {"a": "g2", "b": "g0", "bandwidth_gbps": 9, "latency_us": 3})");
  CHECK_THROWS_AS(parse_cluster(bad), ParseError);
  CHECK_THROWS_WITH_AS(parse_cluster(bad),
                       doctest::Contains("asymmetric"), ParseError);

  // a repeated consistent entry is fine
  std::string dup = doc;
  dup.insert(dup.rfind(']'),
             R"(, {"a": "g2", "b": "g0", "bandwidth_gbps": 7, "latency_us": 3})");
  CHECK_NOTHROW(parse_cluster(dup));
}

TEST_CASE("cluster parse failures carry diagnostics") {
  CHECK_THROWS_AS(parse_cluster("not json"), ParseError);
  CHECK_THROWS_AS(parse_cluster("{}"), ParseError);
  CHECK_THROWS_AS(parse_cluster(R"({"machines": {}, "devices": [],
      "inter": {"bandwidth_gbps": 1, "latency_us": 1}})"),
                  ParseError);

  // duplicate device id
  CHECK_THROWS_WITH_AS(parse_cluster(R"({
    "machines": {"A": {"intra_bandwidth_gbps": 1, "intra_latency_us": 1}},
    "devices": [
      {"id": "x", "machine": "A", "memory_gib": 1, "peak_tflops": 1},
      {"id": "x", "machine": "A", "memory_gib": 1, "peak_tflops": 1}
    ],
    "inter": {"bandwidth_gbps": 1, "latency_us": 1}})"),
      doctest::Contains("duplicate"), ParseError);

  // unknown machine
  CHECK_THROWS_WITH_AS(parse_cluster(R"({
    "machines": {"A": {"intra_bandwidth_gbps": 1, "intra_latency_us": 1}},
    "devices": [{"id": "x", "machine": "Q", "memory_gib": 1, "peak_tflops": 1}],
    "inter": {"bandwidth_gbps": 1, "latency_us": 1}})"),
      doctest::Contains("unknown machine"), ParseError);

  // nonpositive capacity
  CHECK_THROWS_AS(parse_cluster(R"({
    "machines": {"A": {"intra_bandwidth_gbps": 1, "intra_latency_us": 1}},
    "devices": [{"id": "x", "machine": "A", "memory_gib": 0, "peak_tflops": 1}],
    "inter": {"bandwidth_gbps": 1, "latency_us": 1}})"),
                  ParseError);
}

TEST_CASE("suspicious topology warns but parses") {
  std::string doc = R"({
    "machines": {"A": {"intra_bandwidth_gbps": 2, "intra_latency_us": 10}},
    "devices": [
      {"id": "x", "machine": "A", "memory_gib": 1, "peak_tflops": 1},
      {"id": "y", "machine": "A", "memory_gib": 1, "peak_tflops": 1}
    ],
    "inter": {"bandwidth_gbps": 5, "latency_us": 1}})";
  std::vector<std::string> warnings;
  ClusterSpec c = parse_cluster(doc, &warnings);
  CHECK(c.devices.size() == 2);
  REQUIRE(!warnings.empty());
  CHECK(warnings[0].find("intra") != std::string::npos);
}

TEST_CASE("serialize then reparse is a fixed point") {
  ClusterSpec c = parse_cluster(kTwoMachine);
  std::string s1 = serialize_cluster(c);
  ClusterSpec c2 = parse_cluster(s1);
  std::string s2 = serialize_cluster(c2);
  CHECK(s1 == s2);
  CHECK(c2.devices.size() == c.devices.size());
  CHECK(c2.bandwidth == c.bandwidth);
  CHECK(c2.latency == c.latency);
}

TEST_CASE("model parsing and validation") {
  ModelSpec m = parse_model(
      R"({"num_layers": 32, "hidden_dim": 4096, "seq_len": 2048, "bytes_per_element": 2})");
  CHECK(m.num_layers == 32);
  CHECK(m.hidden_dim == 4096);
  CHECK(m.seq_len == 2048);
  CHECK(m.bytes_per_element == 2);
  std::string round = serialize_model(m);
  ModelSpec m2 = parse_model(round);
  CHECK(m2.num_layers == m.num_layers);
  CHECK(serialize_model(m2) == round);

  CHECK_THROWS_AS(parse_model(R"({"num_layers": 0, "hidden_dim": 1,
      "seq_len": 1, "bytes_per_element": 1})"),
                  ParseError);
  CHECK_THROWS_AS(parse_model(R"({"hidden_dim": 1})"), ParseError);
  CHECK_THROWS_AS(parse_model("[1,2]"), ParseError);
}

TEST_CASE("scheduler config parsing") {
  SchedulerConfig def = parse_scheduler_config("{}");
  CHECK(def.global_batch == 1);
  CHECK(def.iterations == 50);
  CHECK(def.tau == 2);
  CHECK(def.balance_cap == doctest::Approx(1.2));
  CHECK(def.micro_batch_candidates == std::vector<std::int64_t>{1, 2, 4, 8});

  SchedulerConfig cfg = parse_scheduler_config(
      R"({"global_batch": 128, "micro_batch_candidates": [2, 4],
          "iterations": 9, "seed": 7, "tau": 3, "balance_cap": 1.5,
          "ema_decay": 0.25, "state_multiplier": 2.0, "threads": 4,
          "random_partition": true})");
  CHECK(cfg.global_batch == 128);
  CHECK(cfg.micro_batch_candidates == std::vector<std::int64_t>{2, 4});
  CHECK(cfg.iterations == 9);
  CHECK(cfg.seed == 7);
  CHECK(cfg.tau == 3);
  CHECK(cfg.random_partition);
  CHECK(cfg.threads == 4);

  CHECK_THROWS_WITH_AS(parse_scheduler_config(R"({"no_such_knob": 1})"),
                       doctest::Contains("unknown key"), ParseError);
  CHECK_THROWS_AS(parse_scheduler_config(R"({"global_batch": 0})"), ParseError);
  CHECK_THROWS_AS(parse_scheduler_config(R"({"ema_decay": 1.0})"), ParseError);
  CHECK_THROWS_AS(parse_scheduler_config(R"({"micro_batch_candidates": []})"),
                  ParseError);
  CHECK_THROWS_AS(parse_scheduler_config(R"({"balance_cap": 0.9})"), ParseError);

  // canonical echo survives a round trip
  std::string echo = serialize_scheduler_config(cfg);
  SchedulerConfig cfg2 = parse_scheduler_config(echo);
  CHECK(serialize_scheduler_config(cfg2) == echo);
}

TEST_CASE("device graph mirrors the cluster") {
  ClusterSpec c = parse_cluster(kTwoMachine);
  DeviceGraph g = build_device_graph(c);
  REQUIRE(g.size() == 3);
  CHECK(g.verts == std::vector<int>{0, 1, 2});
  CHECK(g.weight[0] == doctest::Approx(312e12));
  CHECK(g.weight[2] == doctest::Approx(165e12));
  CHECK(g.beta[0][1] == doctest::Approx(200e9));
  CHECK(g.beta[1][2] == doctest::Approx(12e9));
  CHECK(g.beta[0][0] == 0.0);

  DeviceGraph sub = build_device_graph(c, {2, 0});
  REQUIRE(sub.size() == 2);
  CHECK(sub.verts == std::vector<int>{0, 2});  // ascending original ids
  CHECK(sub.beta[0][1] == doctest::Approx(12e9));
}

TEST_CASE("synthetic clusters are seeded and well formed") {
  CHECK_THROWS_AS(generate_synthetic_cluster(12, 0), InvalidArgument);
  CHECK_THROWS_AS(generate_synthetic_cluster(0, 0), InvalidArgument);

  ClusterSpec c = generate_synthetic_cluster(64, 1);
  CHECK(c.devices.size() == 64);
  CHECK(c.machines.size() == 8);
  for (const auto& d : c.devices) {
    CHECK(d.memory_bytes > 0);
    CHECK(d.peak_flops > 0);
  }
  // composition: at least one fast machine, fast != slow flops
  double lo = 1e30, hi = 0;
  for (const auto& d : c.devices) {
    lo = std::min(lo, d.peak_flops);
    hi = std::max(hi, d.peak_flops);
  }
  CHECK(hi > lo);

  CHECK(synthetic_cluster_json(64, 9) == synthetic_cluster_json(64, 9));
  CHECK(synthetic_cluster_json(64, 9) != synthetic_cluster_json(64, 10));

  ClusterSpec big = generate_synthetic_cluster(320, 3);
  CHECK(big.devices.size() == 320);
  CHECK(big.machines.size() == 40);
}
