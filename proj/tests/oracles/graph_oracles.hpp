#pragma once

// Brute-force oracles for graph partitions, shared by unit and acceptance tests.

#include <map>
#include <queue>
#include <set>

#include "interlace/graph.hpp"
#include "interlace/rng.hpp"

namespace interlace::testing {

/// Partition of the vertices by breadth-first search, as sorted site lists.
inline std::set<std::vector<Site>> bfs_partition(const InterlacementGraph& g) {
  std::map<Site, std::vector<Site>> adj;
  for (const Site& v : g.vertices()) adj[v];
  for (const auto& [i, j] : g.edges()) {
    adj[g.vertices()[i]].push_back(g.vertices()[j]);
    adj[g.vertices()[j]].push_back(g.vertices()[i]);
  }
  std::set<Site> seen;
  std::set<std::vector<Site>> parts;
  for (const auto& [v, _] : adj) {
    if (seen.count(v)) continue;
    std::vector<Site> comp;
    std::queue<Site> q;
    q.push(v);
    seen.insert(v);
    while (!q.empty()) {
      const Site x = q.front();
      q.pop();
      comp.push_back(x);
      for (const Site& y : adj[x])
        if (seen.insert(y).second) q.push(y);
    }
    std::sort(comp.begin(), comp.end());
    parts.insert(comp);
  }
  return parts;
}

inline std::set<std::vector<Site>> label_partition(const InterlacementGraph& g) {
  std::map<std::uint32_t, std::vector<Site>> by_label;
  for (std::uint32_t v = 0; v < g.vertex_count(); ++v) by_label[g.component(v)].push_back(g.vertices()[v]);
  std::set<std::vector<Site>> parts;
  for (auto& [_, c] : by_label) parts.insert(c);
  return parts;
}

inline InterlacementGraph random_graph(RngStream& r, const LBox& box, double p_vertex, double p_edge) {
  std::vector<Site> v;
  std::vector<std::pair<Site, Site>> e;
  for (const Site& x : box.sites()) {
    if (r.uniform() < p_vertex) v.push_back(x);
    for (int a = 0; a < x.dim(); ++a) {
      const Site y = x.neighbor(2u * a);
      if (box.contains(y) && r.uniform() < p_edge) e.emplace_back(x, y);
    }
  }
  return InterlacementGraph(box, v, e);
}

}  // namespace interlace::testing
