#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
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

inline constexpr double kDefaultCMult = 4.0;

/// Binomial frequency with a Wilson interval; `bias_bound` is added to
/// both sides of `ci_with_bias`.
struct ProbabilityEstimate {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double p_hat = 0.0;
  stats::Interval ci;
  double bias_bound = 0.0;
  stats::Interval ci_with_bias;

  static ProbabilityEstimate from_counts(std::size_t k, std::size_t n, double bias = 0.0) {
    ProbabilityEstimate e;
    e.successes = k;
    e.trials = n;
    e.p_hat = n ? static_cast<double>(k) / static_cast<double>(n) : 0.0;
    e.ci = stats::wilson_interval(k, n);
    e.bias_bound = bias;
    e.ci_with_bias = {std::max(0.0, e.ci.lo - bias), std::min(1.0, e.ci.hi + bias)};
    return e;
  }
};

namespace detail {

inline int scaled_radius(int r, double c_mult) {
  if (!(c_mult >= 2.0)) throw std::invalid_argument("C_mult must be >= 2");
  return static_cast<int>(std::floor(c_mult * r));
}

inline void require_inside(const SiteSet& s, const LBox& box, const char* what) {
  for (const Site& x : s)
    if (!box.contains(x))
      throw std::invalid_argument(std::string(what) + ": site " + x.str() + " outside B(R)");
}

}  // namespace detail

struct HittingReport {
  int radius = 0;
  int exit_radius = 0;
  double cap_a = 0.0;
  ProbabilityEstimate estimate;
  /// frequency / (R^{2-d} cap(A)).
  double fitted_c = 0.0;
};

/// Frequency of {H_A < T_{B(0, C R)}} for SRW from x. Walk i uses rng.substream(i).
inline HittingReport hitting_experiment(const SiteSet& a, const Site& x, int radius, double c_mult,
                                        int replicas, const RngStream& rng,
                                        const GreenTable& table) {
  if (a.empty()) throw std::invalid_argument("hitting_experiment: A must be nonempty");
  const int d = x.dim();
  const LBox inner = LBox::ball(d, radius);
  detail::require_inside(a, inner, "hitting_experiment");
  if (!inner.contains(x)) throw std::invalid_argument("hitting_experiment: x outside B(R)");
  HittingReport rep;
  rep.radius = radius;
  rep.exit_radius = detail::scaled_radius(radius, c_mult);
  rep.cap_a = capacity(a, table);
  const LBox outer = LBox::ball(d, rep.exit_radius);
  std::size_t hits = 0;
  for (int i = 0; i < replicas; ++i) {
    RngStream r = rng.substream(static_cast<std::uint64_t>(i));
    Site y = x;
    while (true) {
      if (a.contains(y)) {
        ++hits;
        break;
      }
      if (!outer.contains(y)) break;
      random_step(y, r);
    }
  }
  rep.estimate = ProbabilityEstimate::from_counts(hits, static_cast<std::size_t>(replicas));
  rep.fitted_c = rep.estimate.p_hat / (std::pow(static_cast<double>(radius), 2 - d) * rep.cap_a);
  return rep;
}

/// U <-> V in the graph: some vertex of U and some vertex of V share a component.
inline bool sets_connected(const InterlacementGraph& g, const SiteSet& u, const SiteSet& v) {
  std::vector<std::uint32_t> labels;
  for (const Site& x : u)
    if (auto i = g.index_of(x)) labels.push_back(g.component(*i));
  if (labels.empty()) return false;
  std::sort(labels.begin(), labels.end());
  for (const Site& y : v)
    if (auto j = g.index_of(y))
      if (std::binary_search(labels.begin(), labels.end(), g.component(*j))) return true;
  return false;
}

/// Samples of I ∩ window at increasing levels, coupled by superposition:
/// level k adds an independent soup at level u_k - u_{k-1} drawn from
/// stream.substream(k).
class CoupledLevels {
 public:
  CoupledLevels(std::vector<double> levels, const LBox& window, const EquilibriumMeasure& eq,
                int rho_multiplier)
      : levels_(std::move(levels)), window_(window), eq_(&eq), rho_multiplier_(rho_multiplier) {
    if (levels_.empty()) throw std::invalid_argument("CoupledLevels: no levels");
    for (std::size_t k = 0; k < levels_.size(); ++k)
      if (!(levels_[k] > (k ? levels_[k - 1] : 0.0)))
        throw std::invalid_argument("CoupledLevels: levels must be positive and increasing");
  }

  /// Soups for one replica, one per level.
  std::vector<TrajectorySoup> sample(const RngStream& stream) const {
    std::vector<TrajectorySoup> out;
    for (std::size_t k = 0; k < levels_.size(); ++k) {
      const double du = levels_[k] - (k ? levels_[k - 1] : 0.0);
      auto cfg = SamplerConfig::standard(du, window_, stream.substream(k), rho_multiplier_);
      TrajectorySoup s = sample_soup(cfg, *eq_);
      out.push_back(k ? superpose(out.back(), s) : std::move(s));
    }
    return out;
  }

  const std::vector<double>& levels() const noexcept { return levels_; }

 private:
  std::vector<double> levels_;
  LBox window_;
  const EquilibriumMeasure* eq_;
  int rho_multiplier_;
};

struct ConnectionReport {
  double u = 0.0;
  double cap_u = 0.0;
  double cap_v = 0.0;
  ProbabilityEstimate estimate;
  /// -log(1 - p) / (R^{2-d} cap(U) cap(V)), from the lower confidence bound
  /// when every replica connected.
  double fitted_c = 0.0;
  bool saturated = false;
};

struct CoupledConnectionReport {
  std::vector<ConnectionReport> levels;
  /// Replicas where the event held at some level and failed at a higher one.
  int monotonicity_violations = 0;
};

/// P[U <-> V within I ∩ B(0, C R)] at each level, coupled across levels.
/// Replica r uses rng.substream(r).
inline CoupledConnectionReport two_set_connection_experiment(
    const SiteSet& u_set, const SiteSet& v_set, int radius, const std::vector<double>& levels,
    double c_mult, int replicas, const RngStream& rng, const GreenTable& table,
    int rho_multiplier = 20) {
  if (u_set.empty() || v_set.empty())
    throw std::invalid_argument("two_set_connection_experiment: U and V must be nonempty");
  const int d = u_set.dim();
  const LBox inner = LBox::ball(d, radius);
  detail::require_inside(u_set, inner, "two_set_connection_experiment");
  detail::require_inside(v_set, inner, "two_set_connection_experiment");
  const LBox window = LBox::ball(d, detail::scaled_radius(radius, c_mult));
  const EquilibriumMeasure eq = box_equilibrium_measure(window, table);
  const CoupledLevels coupled(levels, window, eq, rho_multiplier);

  CoupledConnectionReport rep;
  std::vector<std::size_t> hits(levels.size(), 0);
  std::vector<double> bias(levels.size(), 0.0);
  for (int r = 0; r < replicas; ++r) {
    const auto soups = coupled.sample(rng.substream(static_cast<std::uint64_t>(r)));
    bool seen = false;
    for (std::size_t k = 0; k < soups.size(); ++k) {
      const bool ok = sets_connected(induced_graph(soups[k]), u_set, v_set);
      if (seen && !ok) ++rep.monotonicity_violations;
      seen = seen || ok;
      hits[k] += ok;
      bias[k] = soups[k].event_bias_bound();
    }
  }
  const double cu = capacity(u_set, table), cv = capacity(v_set, table);
  const double scale = std::pow(static_cast<double>(radius), 2 - d) * cu * cv;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    ConnectionReport c;
    c.u = levels[k];
    c.cap_u = cu;
    c.cap_v = cv;
    c.estimate = ProbabilityEstimate::from_counts(hits[k], static_cast<std::size_t>(replicas), bias[k]);
    c.saturated = hits[k] == static_cast<std::size_t>(replicas);
    const double p = c.saturated ? c.estimate.ci.lo : c.estimate.p_hat;
    c.fitted_c = -std::log1p(-p) / scale;
    rep.levels.push_back(c);
  }
  return rep;
}

/// Every vertex of g inside `inner` is in one component (and there is at least one).
inline bool locally_unique(const InterlacementGraph& g, const LBox& inner) {
  bool found = false;
  std::uint32_t label = 0;
  for (std::uint32_t v = 0; v < g.vertex_count(); ++v) {
    if (!inner.contains(g.vertices()[v])) continue;
    if (!found) {
      found = true;
      label = g.component(v);
    } else if (g.component(v) != label) {
      return false;
    }
  }
  return found;
}

struct LocalUniquenessReport {
  int radius = 0;
  double u = 0.0;
  ProbabilityEstimate estimate;
  /// Replicas with I ∩ B(R) empty.
  int empty = 0;
};

/// P[I ∩ B(R) nonempty and connected within I ∩ B(2R)]. Replica r uses rng.substream(r).
inline LocalUniquenessReport local_uniqueness_experiment(int radius, double u, int d, int replicas,
                                                         const RngStream& rng,
                                                         const GreenTable& table,
                                                         int rho_multiplier = 20) {
  if (radius < 2) throw std::invalid_argument("local_uniqueness_experiment: R must be >= 2");
  const LBox inner = LBox::ball(d, radius);
  const LBox window = LBox::ball(d, 2 * radius);
  const EquilibriumMeasure eq = box_equilibrium_measure(window, table);
  LocalUniquenessReport rep;
  rep.radius = radius;
  rep.u = u;
  std::size_t hits = 0;
  double bias = 0.0;
  for (int r = 0; r < replicas; ++r) {
    const auto cfg =
        SamplerConfig::standard(u, window, rng.substream(static_cast<std::uint64_t>(r)), rho_multiplier);
    const TrajectorySoup soup = sample_soup(cfg, eq);
    bias = soup.event_bias_bound();
    const InterlacementGraph g = induced_graph(soup);
    if (locally_unique(g, inner)) {
      ++hits;
    } else {
      bool any = false;
      for (const Site& x : g.vertices()) any = any || inner.contains(x);
      if (!any) ++rep.empty;
    }
  }
  rep.estimate = ProbabilityEstimate::from_counts(hits, static_cast<std::size_t>(replicas), bias);
  return rep;
}

/// Slope of -log(1 - p(R)) against R^{1/6}. Saturated estimates use
/// (k + 1/2) / (n + 1) so the logarithm stays finite.
inline double uniqueness_rate_slope(const std::vector<LocalUniquenessReport>& reports) {
  std::vector<double> x, y;
  for (const auto& r : reports) {
    const double n = static_cast<double>(r.estimate.trials);
    const double p = (static_cast<double>(r.estimate.successes) + 0.5) / (n + 1.0);
    x.push_back(std::pow(static_cast<double>(r.radius), 1.0 / 6.0));
    y.push_back(-std::log1p(-p));
  }
  return stats::regression_slope(x, y);
}

struct TwoPointReport {
  double u = 0.0;
  /// Frequency of {x, y in I and x, y not connected}.
  ProbabilityEstimate failure;
  /// Frequency of {x, y in I}.
  ProbabilityEstimate both_present;
};

/// Failure of two-point connectivity within I ∩ B(0, C R) at each level,
/// coupled across levels. Replica r uses rng.substream(r).
inline std::vector<TwoPointReport> two_point_experiment(const Site& x, const Site& y, int radius,
                                                        const std::vector<double>& levels,
                                                        double c_mult, int replicas,
                                                        const RngStream& rng,
                                                        const GreenTable& table,
                                                        int rho_multiplier = 20) {
  const int d = x.dim();
  const LBox inner = LBox::ball(d, radius);
  if (!inner.contains(x) || !inner.contains(y))
    throw std::invalid_argument("two_point_experiment: x and y must lie in B(R)");
  const LBox window = LBox::ball(d, detail::scaled_radius(radius, c_mult));
  const EquilibriumMeasure eq = box_equilibrium_measure(window, table);
  const CoupledLevels coupled(levels, window, eq, rho_multiplier);
  std::vector<std::size_t> fail(levels.size(), 0), present(levels.size(), 0);
  std::vector<double> bias(levels.size(), 0.0);
  for (int r = 0; r < replicas; ++r) {
    const auto soups = coupled.sample(rng.substream(static_cast<std::uint64_t>(r)));
    for (std::size_t k = 0; k < soups.size(); ++k) {
      const InterlacementGraph g = induced_graph(soups[k]);
      bias[k] = soups[k].event_bias_bound();
      if (!g.has_vertex(x) || !g.has_vertex(y)) continue;
      ++present[k];
      if (!g.connected(x, y)) ++fail[k];
    }
  }
  std::vector<TwoPointReport> out;
  const auto n = static_cast<std::size_t>(replicas);
  for (std::size_t k = 0; k < levels.size(); ++k)
    out.push_back({levels[k], ProbabilityEstimate::from_counts(fail[k], n, bias[k]),
                   ProbabilityEstimate::from_counts(present[k], n, bias[k])});
  return out;
}

}  // namespace interlace
