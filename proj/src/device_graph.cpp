#include "device_graph.hpp"

#include <algorithm>
#include <numeric>

namespace hexplan {

DeviceGraph build_device_graph(const ClusterSpec& c) {
  std::vector<int> all(c.devices.size());
  std::iota(all.begin(), all.end(), 0);
  return build_device_graph(c, all);
}

DeviceGraph build_device_graph(const ClusterSpec& c, const std::vector<int>& devs) {
  DeviceGraph g;
  g.verts = devs;
  std::sort(g.verts.begin(), g.verts.end());
  int n = g.size();
  g.weight.resize(n);
  g.beta.assign(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    g.weight[i] = c.devices[g.verts[i]].peak_flops;
    for (int k = i + 1; k < n; ++k) {
      double b = c.bandwidth[g.verts[i]][g.verts[k]];
      g.beta[i][k] = g.beta[k][i] = b;
    }
  }
  return g;
}

}  // namespace hexplan
