#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "interlace/graph.hpp"
#include "interlace/lattice.hpp"
#include "interlace/potential.hpp"
#include "interlace/rng.hpp"

namespace interlace {

/// sup over x != 0 of g(x) |x|_inf^{d-2}, read off the Green table (attained
/// at small |x|) and rounded up. Indexed by d.
inline constexpr double kGreenDecaySup[kMaxDim + 1] = {0, 0, 0, 0.5164, 0.2639, 0.2201, 0.2372};

/// Parameters of a window-restricted interlacement sample at level u.
struct SamplerConfig {
  double u = 1.0;
  LBox window;
  /// Forward walks stop on leaving B(window.center, truncation_radius).
  int truncation_radius = 0;
  std::int64_t step_cap = 0;
  RngStream rng{0, 0};
  /// On leaving B(rho) at y, return to the window with probability
  /// P_y[H_W < inf] and re-enter from the normalized equilibrium measure.
  bool reentry = true;

  /// rho = rho_multiplier * max(R, 1), step cap 16 rho^2.
  static SamplerConfig standard(double u, const LBox& window, RngStream rng,
                                int rho_multiplier = 20) {
    SamplerConfig c;
    c.u = u;
    c.window = window;
    c.truncation_radius = rho_multiplier * std::max(window.radius, 1);
    c.step_cap = 16 * static_cast<std::int64_t>(c.truncation_radius) * c.truncation_radius;
    c.rng = rng;
    return c;
  }

  int dim() const noexcept { return window.dim(); }

  void validate() const {
    check_dimension(window.dim());
    if (!(u > 0.0) || !std::isfinite(u)) throw std::invalid_argument("sampler: u must be > 0");
    if (truncation_radius < 4 * window.radius || truncation_radius <= window.radius)
      throw std::invalid_argument("sampler: truncation radius must be >= 4 * window radius");
    const std::int64_t rho = truncation_radius;
    if (step_cap < 16 * rho * rho)
      throw std::invalid_argument("sampler: step cap must be >= 16 * rho^2");
  }
};

/// Forward part of one trajectory, stored as a start site and move codes
/// (k in [0, 2d), see Site::step).
struct Trajectory {
  Site start;
  std::vector<std::uint8_t> moves;
  StopReason reason = StopReason::kStepCap;
  /// For a continuation piece (a return to the window after leaving
  /// B(rho)), the index of the trajectory it belongs to.
  std::optional<std::size_t> parent;

  std::size_t steps() const noexcept { return moves.size(); }

  /// f(site) for X(0), X(1), ..., X(steps()).
  template <class F>
  void visit(F&& f) const {
    Site x = start;
    f(x);
    for (std::uint8_t k : moves) {
      x.step(k);
      f(x);
    }
  }

  LatticePath path() const {
    LatticePath p;
    p.vertices.reserve(moves.size() + 1);
    visit([&](const Site& x) { p.vertices.push_back(x); });
    return p;
  }
};

/// Trajectories of a Pois(u, W*) sample that meet the window, forward parts only.
struct TrajectorySoup {
  SamplerConfig config;
  /// Number of trajectories hitting the window (continuation pieces excluded).
  std::size_t count = 0;
  std::vector<Trajectory> trajectories;
  /// Per-trajectory bound on the probability that the walk returns to the
  /// window after leaving B(rho). Truncation (or approximate re-entry)
  /// changes the law only on that event.
  double bias_bound = 0.0;
  /// cap(window) used for the Poisson count.
  double window_capacity = 0.0;
  /// Walks that hit the step cap before leaving B(rho).
  std::size_t truncated = 0;
  /// Returns to the window after leaving B(rho), in trajectory order.
  std::vector<Trajectory> continuations;

  bool is_truncated() const noexcept { return truncated > 0; }

  /// The zero point measure (level 0) on the configured window.
  static TrajectorySoup empty(SamplerConfig config) {
    TrajectorySoup s;
    config.u = 0.0;
    s.config = std::move(config);
    return s;
  }

  /// Expected-count version of bias_bound: bound on the change of any
  /// window event caused by truncation.
  double event_bias_bound() const noexcept { return config.u * window_capacity * bias_bound; }

  /// Bound on the truncation bias of P[x is visited], x in the window:
  /// E[N] sup_{|y - c| > rho} g(y - x) / g(0).
  double site_bias_bound(const Site& x, double g0) const {
    const int d = config.dim();
    const double dist = config.truncation_radius + 1 - chebyshev_distance(x, config.window.center);
    return config.u * window_capacity * kGreenDecaySup[d] * std::pow(dist, 2 - d) / g0;
  }

  std::size_t reentries() const noexcept { return continuations.size(); }

  /// f(trajectory) over trajectories, then continuation pieces.
  template <class F>
  void for_each_piece(F&& f) const {
    for (const auto& t : trajectories) f(t);
    for (const auto& t : continuations) f(t);
  }

  bool visits(const Site& x) const {
    bool hit = false;
    for_each_piece([&](const Trajectory& t) {
      if (!hit) t.visit([&](const Site& y) { hit = hit || y == x; });
    });
    return hit;
  }
};

namespace detail {

/// Sampler for the normalized equilibrium measure (inverse CDF).
class StartSampler {
 public:
  explicit StartSampler(const EquilibriumMeasure& eq) : support_(&eq.support) {
    cdf_.resize(eq.weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < eq.weights.size(); ++i) {
      acc += eq.weights[i];
      cdf_[i] = acc;
    }
    total_ = acc;
  }

  const Site& draw(RngStream& rng) const {
    const double target = rng.uniform() * total_;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
    if (it == cdf_.end()) --it;
    // upper_bound never lands on a zero-weight site.
    return (*support_)[static_cast<std::size_t>(it - cdf_.begin())];
  }

 private:
  const std::vector<Site>* support_;
  std::vector<double> cdf_;
  double total_ = 0.0;
};

/// Poisson(u cap) starts from the normalized equilibrium measure, then a
/// forward walk per start. Stream layout: substream 0 for the count and
/// starts, substream i + 1 for walk i.
template <class WalkFn>
std::vector<Trajectory> sample_trajectories(double u, const EquilibriumMeasure& eq,
                                            const RngStream& rng, WalkFn&& walk) {
  std::vector<Trajectory> out;
  if (eq.total_mass <= 0.0) return out;
  RngStream head = rng.substream(0);
  const std::uint64_t n = head.poisson(u * eq.total_mass);
  StartSampler starts(eq);
  out.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    out[i].start = starts.draw(head);
    RngStream stream = rng.substream(i + 1);
    walk(out[i], stream);
  }
  return out;
}

}  // namespace detail

/// Leading term of g(x) for large |x|_2: (d/2) Gamma(d/2 - 1) pi^{-d/2} |x|^{2-d}.
inline double green_asymptotic(const Site& x) {
  const int d = x.dim();
  double r2 = 0.0;
  for (int i = 0; i < d; ++i) r2 += static_cast<double>(x[i]) * x[i];
  const double c = 0.5 * d * std::tgamma(0.5 * d - 1.0) * std::pow(std::numbers::pi, -0.5 * d);
  return c * std::pow(r2, 1.0 - 0.5 * d);
}

/// Sample the interlacement at level config.u restricted to the window.
///
/// `eq` must be the equilibrium measure of the window box. Backward parts
/// never visit the window and are not generated.
inline TrajectorySoup sample_soup(const SamplerConfig& config, const EquilibriumMeasure& eq) {
  config.validate();
  const LBox& w = config.window;
  for (const Site& s : eq.support)
    if (chebyshev_distance(s, w.center) != w.radius)
      throw std::invalid_argument("sample_soup: equilibrium measure is not that of the window");

  TrajectorySoup soup;
  soup.config = config;
  soup.window_capacity = eq.total_mass;
  const int d = config.dim();
  const int rho = config.truncation_radius;
  soup.bias_bound =
      kGreenDecaySup[d] * eq.total_mass * std::pow(static_cast<double>(rho + 1 - w.radius), 2 - d);

  const Site center = w.center;
  const std::int64_t cap = config.step_cap;
  const auto moves = 2u * static_cast<unsigned>(d);
  const detail::StartSampler entrance(eq);
  auto run = [&](Trajectory& t, RngStream& rng) {
    Site x = t.start;
    for (std::int64_t step = 0; step < cap; ++step) {
      const auto k = static_cast<std::uint8_t>(rng.below(moves));
      x.step(k);
      t.moves.push_back(k);
      if (std::abs(x[k >> 1] - center[k >> 1]) > rho) {
        t.reason = StopReason::kExitedBox;
        return x;
      }
    }
    t.reason = StopReason::kStepCap;
    return x;
  };
  std::vector<std::vector<Trajectory>> pieces;
  std::vector<Trajectory> primary =
      detail::sample_trajectories(config.u, eq, config.rng, [&](Trajectory& t, RngStream& rng) {
        std::vector<Trajectory> extra;
        Site exit = run(t, rng);
        StopReason reason = t.reason;
        while (config.reentry && reason == StopReason::kExitedBox) {
          double h = 0.0;
          for (std::size_t i = 0; i < eq.support.size(); ++i)
            h += green_asymptotic(eq.support[i] - exit) * eq.weights[i];
          if (rng.uniform() >= h) break;
          Trajectory c;
          c.start = entrance.draw(rng);
          c.parent = pieces.size();
          exit = run(c, rng);
          reason = c.reason;
          extra.push_back(std::move(c));
        }
        pieces.push_back(std::move(extra));
      });
  soup.count = primary.size();
  soup.trajectories = std::move(primary);
  for (auto& p : pieces)
    for (auto& c : p) soup.continuations.push_back(std::move(c));
  soup.for_each_piece([&](const Trajectory& t) {
    if (t.reason == StopReason::kStepCap) ++soup.truncated;
  });
  return soup;
}

/// Soup of forward walks of exactly `steps` steps started on an arbitrary
/// finite set A with equilibrium measure `eq` (used for Psi-type sets, which
/// only look at times 1..T).
inline TrajectorySoup sample_fixed_length_soup(double u, const EquilibriumMeasure& eq,
                                               std::int64_t steps, const RngStream& rng) {
  if (!(u > 0.0)) throw std::invalid_argument("sample_fixed_length_soup: u must be > 0");
  if (steps < 0) throw std::invalid_argument("sample_fixed_length_soup: negative length");
  TrajectorySoup soup;
  soup.config.u = u;
  soup.config.rng = rng;
  soup.config.step_cap = steps;
  if (!eq.support.empty()) soup.config.window = SiteSet(eq.support).bounding_box();
  soup.window_capacity = eq.total_mass;
  const auto moves = eq.support.empty() ? 0u : 2u * static_cast<unsigned>(eq.support[0].dim());
  soup.trajectories = detail::sample_trajectories(u, eq, rng, [&](Trajectory& t, RngStream& r) {
    t.moves.resize(static_cast<std::size_t>(steps));
    for (auto& k : t.moves) k = static_cast<std::uint8_t>(r.below(moves));
    t.reason = StopReason::kStepCap;
  });
  soup.count = soup.trajectories.size();
  return soup;
}

/// Vertices and edges of the soup inside `window` (a sub-box of the
/// sampling window). An edge is recorded when a step has both endpoints in
/// the window.
inline InterlacementGraph induced_graph(const TrajectorySoup& soup, const LBox& window) {
  const LBox& outer = soup.config.window;
  if (window.dim() != outer.dim() ||
      chebyshev_distance(window.center, outer.center) + window.radius > outer.radius)
    throw std::invalid_argument("induced_graph: window is not inside the sampled window");
  GraphBuilder builder(window);
  soup.for_each_piece([&](const Trajectory& t) {
    Site x = t.start;
    builder.add_vertex(x);
    for (std::uint8_t k : t.moves) {
      const Site prev = x;
      x.step(k);
      builder.add_step(prev, x);
    }
  });
  return builder.build();
}

inline InterlacementGraph induced_graph(const TrajectorySoup& soup) {
  return induced_graph(soup, soup.config.window);
}

/// Sum of two independent samples on the same window: level u1 + u2.
inline TrajectorySoup superpose(const TrajectorySoup& a, const TrajectorySoup& b) {
  if (!(a.config.window == b.config.window) ||
      a.config.truncation_radius != b.config.truncation_radius ||
      a.config.step_cap != b.config.step_cap)
    throw std::invalid_argument("superpose: soups have different windows or truncation");
  if (a.config.rng.seed() == b.config.rng.seed() &&
      a.config.rng.stream_id() == b.config.rng.stream_id())
    throw std::invalid_argument("superpose: soups share an rng stream and are not independent");
  TrajectorySoup out = a;
  out.config.u = a.config.u + b.config.u;
  out.count = a.count + b.count;
  out.trajectories.insert(out.trajectories.end(), b.trajectories.begin(), b.trajectories.end());
  out.truncated = a.truncated + b.truncated;
  for (Trajectory c : b.continuations) {
    *c.parent += a.trajectories.size();
    out.continuations.push_back(std::move(c));
  }
  out.bias_bound = std::max(a.bias_bound, b.bias_bound);
  return out;
}

}  // namespace interlace
