#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "interlace/graph.hpp"
#include "interlace/lattice.hpp"
#include "interlace/rng.hpp"
#include "interlace/solvers.hpp"

namespace interlace {

/// The tube  union over n >= 1 of B(round(n v), n^eps)  around the ray through v.
class Paraboloid {
 public:
  Paraboloid(std::vector<double> v, double eps) : v_(std::move(v)), eps_(eps) {
    check_dimension(static_cast<int>(v_.size()));
    double norm = 0.0;
    for (double c : v_) norm += c * c;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-12)
      throw std::invalid_argument("Paraboloid: direction must be a unit vector");
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("Paraboloid: eps must be in (0, 1)");
  }

  int dim() const noexcept { return static_cast<int>(v_.size()); }
  const std::vector<double>& direction() const noexcept { return v_; }
  double eps() const noexcept { return eps_; }

  /// round(n v), coordinatewise, ties toward +infinity.
  Site center(std::int64_t n) const {
    Site c(dim());
    for (int i = 0; i < dim(); ++i)
      c[i] = static_cast<int>(std::floor(static_cast<double>(n) * v_[i] + 0.5));
    return c;
  }

  /// Some n in 1..2|x|_inf + 2 has |x - round(n v)|_inf <= n^eps.
  bool contains(const Site& x) const {
    const std::int64_t n_max = 2 * static_cast<std::int64_t>(x.norm_inf()) + 2;
    for (std::int64_t n = 1; n <= n_max; ++n)
      if ((x - center(n)).norm_inf() <= std::pow(static_cast<double>(n), eps_)) return true;
    return false;
  }

 private:
  std::vector<double> v_;
  double eps_;
};

inline bool paraboloid_contains(const Paraboloid& p, const Site& x) { return p.contains(x); }

/// Uniform direction on the unit sphere of R^d (normalized Gaussian vector).
inline std::vector<double> random_direction(int d, RngStream& rng) {
  check_dimension(d);
  std::vector<double> v(static_cast<std::size_t>(d));
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& c : v) {
      c = rng.normal();
      norm += c * c;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& c : v) c /= norm;
  // Renormalize once more so |v|_2 = 1 to within a few ulps.
  double n2 = 0.0;
  for (double c : v) n2 += c * c;
  for (double& c : v) c /= std::sqrt(n2);
  return v;
}

struct DirectionPath {
  std::optional<LatticePath> path;
  /// "no seed" or "no path" when path is empty.
  std::string failure;
  /// Largest |x|_inf reached by the search.
  int reached = 0;
  bool found() const noexcept { return path.has_value(); }
};

/// Shortest path in graph ∩ paraboloid from the seed (vertex of
/// graph ∩ paraboloid ∩ start_region closest to 0) to any vertex with
/// |x|_inf >= 0.9 r_max.
inline DirectionPath direction_path(const InterlacementGraph& graph, const Paraboloid& p,
                                    const LBox& start_region, int r_max) {
  DirectionPath out;
  const std::size_t n = graph.vertex_count();
  // 0 unknown, 1 inside the tube, 2 outside.
  std::vector<std::uint8_t> inside(n, 0);
  auto in_tube = [&](std::uint32_t v) {
    if (!inside[v]) inside[v] = p.contains(graph.vertices()[v]) ? 1 : 2;
    return inside[v] == 1;
  };
  auto sq = [](const Site& x) {
    std::int64_t s = 0;
    for (int i = 0; i < x.dim(); ++i) s += static_cast<std::int64_t>(x[i]) * x[i];
    return s;
  };
  std::optional<std::uint32_t> seed;
  for (std::uint32_t v = 0; v < n; ++v) {
    const Site& x = graph.vertices()[v];
    if (!start_region.contains(x) || !in_tube(v)) continue;
    // Vertices are sorted, so ties in |x|_2 go to the lexicographically smallest.
    if (!seed || sq(x) < sq(graph.vertices()[*seed])) seed = v;
  }
  if (!seed) {
    out.failure = "no seed";
    return out;
  }
  const int target = static_cast<int>(std::ceil(0.9 * r_max));
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> parent(n, kNone);
  std::queue<std::uint32_t> queue;
  parent[*seed] = *seed;
  queue.push(*seed);
  std::optional<std::uint32_t> hit;
  while (!queue.empty() && !hit) {
    const std::uint32_t v = queue.front();
    queue.pop();
    const int r = graph.vertices()[v].norm_inf();
    out.reached = std::max(out.reached, r);
    if (r >= target) {
      hit = v;
      break;
    }
    for (std::uint32_t w : graph.neighbors(v)) {
      if (parent[w] != kNone || !in_tube(w)) continue;
      parent[w] = v;
      queue.push(w);
    }
  }
  if (!hit) {
    out.failure = "no path";
    return out;
  }
  LatticePath path;
  for (std::uint32_t v = *hit;; v = parent[v]) {
    path.vertices.push_back(graph.vertices()[v]);
    if (v == *seed) break;
  }
  std::reverse(path.vertices.begin(), path.vertices.end());
  out.path = std::move(path);
  return out;
}

/// Antisymmetric edge function on a graph: value(e) is the current from
/// vertices()[i] to vertices()[j] for edges()[e] = {i, j}, i < j.
class Flow {
 public:
  explicit Flow(std::shared_ptr<const InterlacementGraph> graph)
      : graph_(std::move(graph)), values_(graph_->edge_count(), 0.0) {}

  const InterlacementGraph& graph() const noexcept { return *graph_; }
  std::shared_ptr<const InterlacementGraph> graph_ptr() const noexcept { return graph_; }
  const std::vector<double>& edge_values() const noexcept { return values_; }

  /// u(x, y); 0 when {x, y} is not an edge.
  double operator()(const Site& x, const Site& y) const {
    auto i = graph_->index_of(x), j = graph_->index_of(y);
    if (!i || !j) return 0.0;
    auto e = graph_->edge_index(*i, *j);
    if (!e) return 0.0;
    return *i < *j ? values_[*e] : -values_[*e];
  }

  /// Adds `amount` to u(x, y) (and subtracts it from u(y, x)).
  void add(const Site& x, const Site& y, double amount) {
    auto i = graph_->index_of(x), j = graph_->index_of(y);
    if (!i || !j) throw std::invalid_argument("Flow::add: endpoint is not a vertex");
    auto e = graph_->edge_index(*i, *j);
    if (!e) throw std::invalid_argument("Flow::add: not an edge of the graph");
    values_[*e] += *i < *j ? amount : -amount;
  }

  void scale(double f) {
    for (double& v : values_) v *= f;
  }

  void accumulate(const Flow& other, double weight) {
    if (other.graph_ != graph_) throw std::invalid_argument("Flow::accumulate: different graphs");
    for (std::size_t e = 0; e < values_.size(); ++e) values_[e] += weight * other.values_[e];
  }

  /// Net outflow sum_y u(x, y) at every vertex, indexed like vertices().
  std::vector<double> divergence() const {
    std::vector<double> div(graph_->vertex_count(), 0.0);
    const auto& edges = graph_->edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
      div[edges[e].first] += values_[e];
      div[edges[e].second] -= values_[e];
    }
    return div;
  }

 private:
  std::shared_ptr<const InterlacementGraph> graph_;
  std::vector<double> values_;
};

/// Unit flow along a nearest-neighbor path of graph edges.
inline Flow path_flow(std::shared_ptr<const InterlacementGraph> graph, const LatticePath& path) {
  Flow f(std::move(graph));
  for (std::size_t k = 0; k + 1 < path.vertices.size(); ++k)
    f.add(path.vertices[k], path.vertices[k + 1], 1.0);
  return f;
}

/// (1/2) sum_{x,y} u(x, y)^2, i.e. each edge once.
inline double flow_energy(const Flow& f) {
  double e = 0.0;
  for (double v : f.edge_values()) e += v * v;
  return e;
}

/// Energy of the edges with both endpoints in `box`.
inline double flow_energy_within(const Flow& f, const LBox& box) {
  double e = 0.0;
  const auto& g = f.graph();
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto [i, j] = g.edges()[k];
    if (box.contains(g.vertices()[i]) && box.contains(g.vertices()[j]))
      e += f.edge_values()[k] * f.edge_values()[k];
  }
  return e;
}

struct AveragedFlow {
  Flow flow;
  int successes = 0;
  int failures = 0;
  /// Failure reason per direction ("" on success).
  std::vector<std::string> failure_reasons;
  /// Path of every successful direction, in direction order.
  std::vector<LatticePath> paths;
  /// Energies of the single-direction unit flows (= path lengths).
  std::vector<double> path_energies;
  /// Source influx per path start, merged over equal starts.
  std::vector<std::pair<Site, double>> sources;
};

/// Equal-weight average of the unit path flows of the successful directions.
inline AveragedFlow averaged_flow(std::shared_ptr<const InterlacementGraph> graph,
                                  const std::vector<Paraboloid>& directions,
                                  const LBox& start_region, int r_max) {
  std::vector<DirectionPath> results;
  results.reserve(directions.size());
  for (const Paraboloid& p : directions) results.push_back(direction_path(*graph, p, start_region, r_max));
  AveragedFlow out{Flow(graph), 0, 0, {}, {}, {}, {}};
  for (auto& r : results) {
    if (r.found()) {
      ++out.successes;
      out.failure_reasons.emplace_back();
      out.paths.push_back(*r.path);
    } else {
      ++out.failures;
      out.failure_reasons.push_back(r.failure);
    }
  }
  if (out.successes == 0) throw std::runtime_error("averaged_flow: every direction failed");
  const double w = 1.0 / out.successes;
  for (const LatticePath& path : out.paths) {
    out.path_energies.push_back(static_cast<double>(path.length()));
    for (std::size_t k = 0; k + 1 < path.vertices.size(); ++k)
      out.flow.add(path.vertices[k], path.vertices[k + 1], w);
    const Site& s = path.vertices.front();
    auto it = std::find_if(out.sources.begin(), out.sources.end(),
                           [&](const auto& e) { return e.first == s; });
    if (it == out.sources.end())
      out.sources.emplace_back(s, w);
    else
      it->second += w;
  }
  std::sort(out.sources.begin(), out.sources.end());
  return out;
}

struct ResistanceResult {
  /// +infinity when the source cannot reach the sinks.
  double value = std::numeric_limits<double>::infinity();
  double relative_residual = 0.0;
  int iterations = 0;
  bool converged = true;
  std::size_t component_size = 0;
  bool connected() const noexcept { return std::isfinite(value); }
};

/// Effective resistance between `source` and `sinks` with unit conductances:
/// potential 1 at the source, 0 on the sinks, harmonic elsewhere on the
/// source's component; R = 1 / (current out of the source).
inline ResistanceResult effective_resistance(const InterlacementGraph& g, const Site& source,
                                             const SiteSet& sinks, double tolerance = 1e-10) {
  ResistanceResult res;
  auto src = g.index_of(source);
  if (!src) return res;
  const std::uint32_t label = g.component(*src);
  const std::size_t n = g.vertex_count();
  // -1 source, -2 sink, otherwise the unknown's index.
  std::vector<std::int64_t> role(n, -3);
  std::int64_t unknowns = 0;
  bool any_sink = false;
  for (std::uint32_t v = 0; v < n; ++v) {
    if (g.component(v) != label) continue;
    ++res.component_size;
    if (sinks.contains(g.vertices()[v])) {
      role[v] = -2;
      any_sink = true;
    } else if (v == *src) {
      role[v] = -1;
    } else {
      role[v] = unknowns++;
    }
  }
  if (!any_sink) return res;
  if (role[*src] == -2) {
    res.value = 0.0;
    return res;
  }

  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(unknowns);
  for (std::uint32_t v = 0; v < n; ++v) {
    if (role[v] < 0) continue;
    const auto nb = g.neighbors(v);
    trips.emplace_back(role[v], role[v], static_cast<double>(nb.size()));
    for (std::uint32_t w : nb) {
      if (role[w] >= 0)
        trips.emplace_back(role[v], role[w], -1.0);
      else if (role[w] == -1)
        b(role[v]) += 1.0;
    }
  }
  Eigen::SparseMatrix<double> lap(unknowns, unknowns);
  lap.setFromTriplets(trips.begin(), trips.end());
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(unknowns);
  if (unknowns > 0) {
    auto apply = [&lap](const Eigen::VectorXd& p, Eigen::VectorXd& out) { out.noalias() = lap * p; };
    const CgResult cg = conjugate_gradient(apply, Eigen::VectorXd(lap.diagonal()), b, phi, tolerance,
                                           static_cast<int>(std::max<std::int64_t>(1000, 20 * unknowns)));
    res.relative_residual = cg.relative_residual;
    res.iterations = cg.iterations;
    res.converged = cg.converged;
  }
  double current = 0.0;
  for (std::uint32_t w : g.neighbors(*src))
    current += 1.0 - (role[w] >= 0 ? phi(role[w]) : 0.0);
  res.value = 1.0 / current;
  return res;
}

/// Sites of g on the boundary |x - c|_inf = R of the box.
inline SiteSet box_boundary_vertices(const InterlacementGraph& g, const LBox& box) {
  std::vector<Site> out;
  for (const Site& x : g.vertices())
    if (chebyshev_distance(x, box.center) == box.radius) out.push_back(x);
  return SiteSet(std::move(out));
}

}  // namespace interlace
