#pragma once

#include <vector>

#include "types.hpp"

namespace hexplan {

// Complete weighted graph over a device subset. Vertices carry compute
// capability, edges carry pairwise bandwidth. Partitioning operates on this
// shape only, so tests can build instances without a full cluster.
struct DeviceGraph {
  std::vector<int> verts;                     // original ids, ascending
  std::vector<double> weight;                 // vertex weight (c_d)
  std::vector<std::vector<double>> beta;      // symmetric, zero diagonal

  int size() const { return int(verts.size()); }
};

DeviceGraph build_device_graph(const ClusterSpec& c);
DeviceGraph build_device_graph(const ClusterSpec& c, const std::vector<int>& devs);

}  // namespace hexplan
