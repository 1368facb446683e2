#pragma once

#include <cstdint>
#include <string>

#include "types.hpp"

namespace hexplan {

// Synthetic heterogeneous cluster: a few fast NVLink boxes plus a majority of
// mid/low-tier PCIe machines, 8 GPUs each. num_gpus must be a multiple of 8.
// The seed jitters per-machine link speeds a little; composition is a fixed
// function of the size so benchmarks stay comparable.
std::string synthetic_cluster_json(int num_gpus, std::uint64_t seed);
ClusterSpec generate_synthetic_cluster(int num_gpus, std::uint64_t seed);

}  // namespace hexplan
