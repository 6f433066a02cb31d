#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "interlace/graph.hpp"
#include "interlace/green.hpp"
#include "interlace/lattice.hpp"
#include "interlace/potential.hpp"
#include "interlace/rng.hpp"
#include "interlace/sampler.hpp"
#include "interlace/stats.hpp"

namespace interlace {

/// n^{1/2} (d = 3), max(log n, 1) (d = 4), 1 (d >= 5).
inline double f_factor(std::int64_t n, int d) {
  check_dimension(d);
  if (n < 1) throw std::invalid_argument("f_factor: n must be >= 1");
  if (d == 3) return std::sqrt(static_cast<double>(n));
  if (d == 4) return std::max(std::log(static_cast<double>(n)), 1.0);
  return 1.0;
}

/// Union of {X_i(t) : 1 <= t <= T} over independent walks from `starts`.
/// Walk i is driven by rng.substream(i), so adding starts only adds sites.
inline SiteSet phi_set(const std::vector<Site>& starts, std::int64_t t_max, const RngStream& rng) {
  if (t_max < 1) throw std::invalid_argument("phi_set: T must be >= 1");
  if (starts.empty()) throw std::invalid_argument("phi_set: need at least one start");
  std::vector<Site> out;
  out.reserve(starts.size() * static_cast<std::size_t>(t_max));
  for (std::size_t i = 0; i < starts.size(); ++i) {
    RngStream r = rng.substream(i);
    Site x = starts[i];
    for (std::int64_t t = 1; t <= t_max; ++t) {
      random_step(x, r);
      out.push_back(x);
    }
  }
  return SiteSet(std::move(out));
}

/// A soup trajectory is shorter than the requested time horizon.
class TruncatedSoupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Union of time-1..T ranges of the soup's forward trajectories.
inline SiteSet psi_set(const TrajectorySoup& soup, std::int64_t t_max) {
  if (t_max < 1) throw std::invalid_argument("psi_set: T must be >= 1");
  std::vector<Site> out;
  for (std::size_t i = 0; i < soup.trajectories.size(); ++i) {
    const Trajectory& tr = soup.trajectories[i];
    if (static_cast<std::int64_t>(tr.steps()) < t_max)
      throw TruncatedSoupError("psi_set: trajectory " + std::to_string(i) + " has " +
                               std::to_string(tr.steps()) + " steps, fewer than T = " +
                               std::to_string(t_max));
    Site x = tr.start;
    for (std::int64_t t = 0; t < t_max; ++t) {
      x.step(tr.moves[static_cast<std::size_t>(t)]);
      out.push_back(x);
    }
  }
  return SiteSet(std::move(out));
}

/// Connectivity of a site set under nearest-neighbor adjacency.
inline bool is_connected(const SiteSet& s) {
  if (s.size() <= 1) return true;
  UnionFind uf(s.size());
  const auto& v = s.sites();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (int a = 0; a < v[i].dim(); ++a) {
      const Site y = v[i].neighbor(2u * static_cast<unsigned>(a));
      auto it = std::lower_bound(v.begin(), v.end(), y);
      if (it != v.end() && *it == y) uf.unite(i, static_cast<std::size_t>(it - v.begin()));
    }
  const std::size_t root = uf.find(0);
  for (std::size_t i = 1; i < v.size(); ++i)
    if (uf.find(i) != root) return false;
  return true;
}

/// Failure inside a u-chain, tagged with the stage it happened at.
class ChainStageError : public std::runtime_error {
 public:
  ChainStageError(int stage, const std::string& what)
      : std::runtime_error("u_chain stage " + std::to_string(stage) + ": " + what), stage(stage) {}
  int stage;
};

struct UChain {
  /// stages[i] = U^{(i+1)}.
  std::vector<SiteSet> stages;
  /// union of all stages together with x.
  SiteSet all;
  bool connected = false;
  std::vector<double> capacities;
};

/// U^{(1)} is the time-1..T range of a walk from x; U^{(k)} is the
/// time-1..T range of the level-u soup started from e_{U^{(k-1)}}.
///
/// Stage k draws from rng.substream(k - 1).
inline UChain u_chain(const Site& x, std::int64_t t_max, int s, double u, const RngStream& rng,
                      const GreenTable& table, const PotentialOptions& opt = {}) {
  if (s < 1) throw std::invalid_argument("u_chain: s must be >= 1");
  if (!(u > 0.0)) throw std::invalid_argument("u_chain: u must be > 0");
  UChain chain;
  chain.stages.push_back(phi_set({x}, t_max, rng.substream(0)));
  for (int k = 2; k <= s; ++k) {
    const SiteSet& prev = chain.stages.back();
    try {
      const EquilibriumMeasure eq = equilibrium_measure(prev, table, opt);
      chain.capacities.push_back(eq.total_mass);
      const TrajectorySoup soup =
          sample_fixed_length_soup(u, eq, t_max, rng.substream(static_cast<std::uint64_t>(k - 1)));
      chain.stages.push_back(psi_set(soup, t_max));
    } catch (const std::exception& e) {
      throw ChainStageError(k, e.what());
    }
    if (chain.stages.back().empty()) {
      // An empty stage stays empty: its capacity is 0.
      for (int j = k + 1; j <= s; ++j) chain.stages.emplace_back();
      break;
    }
  }
  chain.all = SiteSet{x};
  for (const SiteSet& st : chain.stages) chain.all = chain.all.united(st);
  chain.connected = is_connected(chain.all);
  return chain;
}

struct CapacityScalingReport {
  int d = 3;
  std::int64_t n = 1;
  std::int64_t t = 1;
  int replicas = 0;
  int dropped = 0;
  double mean_cap = 0.0;
  double std_cap = 0.0;
  /// min(N T / F(T, d), T^{(d-2)/2}).
  double predicted = 0.0;
  double fitted_c = 0.0;
  /// 5th percentile of cap / min(N T^{(1-eps)/2}, T^{(d-2)(1-eps)/2}).
  double lower_quantile = 0.0;
  /// Replicas with cap > N T / g(0).
  int upper_bound_violations = 0;
  /// More than 1% of replicas dropped.
  bool flagged = false;
  std::vector<double> caps;
};

struct ScalingPoint {
  std::int64_t n = 1;
  std::int64_t t = 1;
};

inline constexpr int kMinReportReplicas = 100;

/// cap(Phi) for N walks from the origin over a grid of (N, T). Replica r at
/// horizon T uses rng.substream(T).substream(r) whatever N is, so Phi grows
/// with N replica by replica.
inline std::vector<CapacityScalingReport> capacity_scaling_experiment(
    const std::vector<ScalingPoint>& grid, int d, int replicas, const RngStream& rng,
    const GreenTable& table, double eps = 1.0 / 3.0) {
  check_dimension(d);
  if (table.d != d) throw std::invalid_argument("capacity_scaling_experiment: table dimension");
  if (replicas < kMinReportReplicas)
    throw std::invalid_argument("capacity_scaling_experiment: replicas must be >= 100");
  std::vector<CapacityScalingReport> out;
  const double g0 = table.origin();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto [n, t] = grid[g];
    CapacityScalingReport rep;
    rep.d = d;
    rep.n = n;
    rep.t = t;
    rep.replicas = replicas;
    const double td = static_cast<double>(t);
    rep.predicted = std::min(static_cast<double>(n) * td / f_factor(t, d), std::pow(td, (d - 2) / 2.0));
    const double hp_scale = std::min(static_cast<double>(n) * std::pow(td, (1.0 - eps) / 2.0),
                                     std::pow(td, (d - 2) * (1.0 - eps) / 2.0));
    const std::vector<Site> starts(static_cast<std::size_t>(n), Site::origin(d));
    const double upper = static_cast<double>(n) * td / g0;
    std::vector<double> scaled;
    for (int r = 0; r < replicas; ++r) {
      const RngStream stream =
          rng.substream(static_cast<std::uint64_t>(t)).substream(static_cast<std::uint64_t>(r));
      const SiteSet phi = phi_set(starts, t, stream);
      if (phi.diameter() > table.radius) {
        ++rep.dropped;
        continue;
      }
      const double c = capacity(phi, table);
      if (c > upper * (1.0 + 1e-12)) ++rep.upper_bound_violations;
      rep.caps.push_back(c);
      scaled.push_back(c / hp_scale);
    }
    rep.mean_cap = stats::mean(rep.caps);
    rep.std_cap = stats::stddev(rep.caps);
    rep.fitted_c = rep.mean_cap / rep.predicted;
    if (!scaled.empty()) rep.lower_quantile = stats::quantile(scaled, 0.05);
    rep.flagged = rep.dropped * 100 > replicas;
    out.push_back(std::move(rep));
  }
  return out;
}

/// Event frequency for the high-probability capacity bound of a soup range:
/// P[cap(Psi) >= c min(cap(A) T^{(1-eps)/2}, T^{(d-2)(1-eps)/2})].
struct PsiCapacityReport {
  int replicas = 0;
  double cap_a = 0.0;
  double scale = 0.0;
  /// Calibrated constant (5th percentile of cap(Psi)/scale on the pilot run).
  double c = 0.0;
  double frequency = 0.0;
  stats::Interval ci;
  std::vector<double> caps;
};

/// Pilot replicas use rng.substream(0), measured ones rng.substream(1).
inline PsiCapacityReport psi_capacity_experiment(const SiteSet& a, std::int64_t t_max, double u,
                                                 double eps, int pilot, int replicas,
                                                 const RngStream& rng, const GreenTable& table) {
  if (a.empty()) throw std::invalid_argument("psi_capacity_experiment: A must be nonempty");
  const int d = a.dim();
  PsiCapacityReport rep;
  rep.replicas = replicas;
  const EquilibriumMeasure eq = equilibrium_measure(a, table);
  rep.cap_a = eq.total_mass;
  const double td = static_cast<double>(t_max);
  rep.scale = std::min(rep.cap_a * std::pow(td, (1.0 - eps) / 2.0),
                       std::pow(td, (d - 2) * (1.0 - eps) / 2.0));
  auto run = [&](const RngStream& base, int count) {
    std::vector<double> caps;
    for (int r = 0; r < count; ++r) {
      const TrajectorySoup soup =
          sample_fixed_length_soup(u, eq, t_max, base.substream(static_cast<std::uint64_t>(r)));
      SiteSet psi;
      try {
        psi = psi_set(soup, t_max);
      } catch (const TruncatedSoupError& e) {
        throw TruncatedSoupError("replica " + std::to_string(r) + ": " + e.what());
      }
      caps.push_back(capacity(psi, table));
    }
    return caps;
  };
  std::vector<double> pilot_caps = run(rng.substream(0), pilot);
  for (double& c : pilot_caps) c /= rep.scale;
  rep.c = stats::quantile(pilot_caps, 0.05);
  rep.caps = run(rng.substream(1), replicas);
  std::size_t hits = 0;
  for (double c : rep.caps)
    if (c >= rep.c * rep.scale) ++hits;
  rep.frequency = static_cast<double>(hits) / replicas;
  rep.ci = stats::wilson_interval(hits, static_cast<std::size_t>(replicas));
  return rep;
}

struct ClusterCapacityReport {
  int radius = 0;
  double u = 0.0;
  double eps = 0.0;
  int replicas = 0;
  /// Samples rejected because the origin was not visited.
  int rejected = 0;
  double window_capacity = 0.0;
  /// cap(C(0, R)) R^{-(d-2)(1-eps)} per accepted replica.
  std::vector<double> normalized;
  double c = 0.0;
  double failure_frequency = 0.0;
  stats::Interval ci;
  /// Replicas with cap(C) > cap(B(0, R)); must stay 0.
  int monotonicity_violations = 0;
  double bias_bound = 0.0;
};

/// Thrown when conditioning on {0 in I} by rejection is hopeless.
class RejectionRateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Distribution of the capacity of the cluster of 0 in I ∩ B(0, R), given
/// 0 in I. The sample window is B(0, R) itself: the trace of I on the window
/// is exact. Attempt i uses rng.substream(i). If `c` is not given it is the
/// 5th percentile of this run's normalized capacities.
inline ClusterCapacityReport cluster_capacity_experiment(int radius, double u, int d, double eps,
                                                         int replicas, const RngStream& rng,
                                                         const GreenTable& table,
                                                         std::optional<double> c = std::nullopt,
                                                         int rho_multiplier = 20) {
  if (radius < 1) throw std::invalid_argument("cluster_capacity_experiment: R must be >= 1");
  if (replicas < 1) throw std::invalid_argument("cluster_capacity_experiment: replicas >= 1");
  ClusterCapacityReport rep;
  rep.radius = radius;
  rep.u = u;
  rep.eps = eps;
  rep.replicas = replicas;
  const LBox window = LBox::ball(d, radius);
  const EquilibriumMeasure eq_window = equilibrium_measure(SiteSet::box(window), table);
  rep.window_capacity = eq_window.total_mass;
  const double scale = std::pow(static_cast<double>(radius), (d - 2) * (1.0 - eps));
  PotentialOptions opt;
  opt.dense_limit = 2000;
  const Site origin = Site::origin(d);
  std::uint64_t attempt = 0;
  while (static_cast<int>(rep.normalized.size()) < replicas) {
    const auto cfg = SamplerConfig::standard(u, window, rng.substream(attempt++), rho_multiplier);
    const TrajectorySoup soup = sample_soup(cfg, eq_window);
    rep.bias_bound = soup.event_bias_bound();
    const InterlacementGraph graph = induced_graph(soup);
    if (!graph.has_vertex(origin)) {
      ++rep.rejected;
      if (attempt >= 1000 && rep.normalized.size() * 1000 < attempt)
        throw RejectionRateError("cluster_capacity_experiment: acceptance rate of {0 in I} below "
                                 "1e-3; use a larger u");
      continue;
    }
    const double cap = capacity(SiteSet(graph.component_sites(origin)), table, opt);
    if (cap > rep.window_capacity * (1.0 + 1e-9)) ++rep.monotonicity_violations;
    rep.normalized.push_back(cap / scale);
  }
  rep.c = c ? *c : stats::quantile(rep.normalized, 0.05);
  std::size_t failures = 0;
  for (double v : rep.normalized)
    if (v < rep.c) ++failures;
  rep.failure_frequency = static_cast<double>(failures) / replicas;
  rep.ci = stats::wilson_interval(failures, static_cast<std::size_t>(replicas));
  return rep;
}

}  // namespace interlace
