#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "interlace/green.hpp"
#include "interlace/lattice.hpp"
#include "interlace/rng.hpp"
#include "interlace/solvers.hpp"

namespace interlace {

/// Numerical failure of a potential-theory solve (ill-conditioning,
/// negative equilibrium weights, non-convergence).
class PotentialError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kNegativeWeightTolerance = 1e-9;
inline constexpr double kMaxConditionNumber = 1e12;

/// e_K restricted to the inner boundary of K.
struct EquilibriumMeasure {
  std::vector<Site> support;
  std::vector<double> weights;
  double total_mass = 0.0;
  /// Weights in [-1e-9, 0) that were clamped to zero.
  int clamped = 0;
  /// Estimated 1-norm condition number of the Green matrix (dense path only).
  double condition_estimate = 0.0;
  bool used_iterative = false;

  /// Normalized equilibrium measure e_K / cap(K).
  std::vector<double> normalized() const {
    std::vector<double> out(weights);
    for (double& w : out) w /= total_mass;
    return out;
  }

  double weight(const Site& x) const {
    auto it = std::lower_bound(support.begin(), support.end(), x);
    return (it != support.end() && *it == x) ? weights[it - support.begin()] : 0.0;
  }
};

/// Finite measure on Z^d.
struct FiniteMeasure {
  std::vector<Site> support;
  std::vector<double> weights;
  bool probability = false;

  void validate() const {
    if (support.size() != weights.size())
      throw std::invalid_argument("FiniteMeasure: support/weights size mismatch");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("FiniteMeasure: negative weight");
      sum += w;
    }
    if (probability && std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("FiniteMeasure: probability weights do not sum to 1");
  }

  static FiniteMeasure point_mass(const Site& x) { return {{x}, {1.0}, true}; }
};

struct PotentialOptions {
  /// Largest system solved by dense Cholesky; above it, preconditioned CG.
  std::size_t dense_limit = 8000;
  /// Above this size the dense Green matrix is not formed at all.
  std::size_t hard_limit = 16000;
  double cg_tolerance = 1e-10;
  bool warn_on_clamp = true;
  /// Solve full boxes through their symmetry reduction.
  bool exploit_symmetry = true;
};

namespace detail {

inline void require_in_table(const SiteSet& k, const GreenTable& table) {
  if (k.dim() != table.d) throw std::invalid_argument("site set / green table dimension mismatch");
  if (k.diameter() > table.radius)
    throw std::out_of_range("set diameter " + std::to_string(k.diameter()) +
                            " exceeds green table radius " + std::to_string(table.radius));
}

inline Eigen::MatrixXd green_matrix(const std::vector<Site>& sites, const GreenTable& table) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = table.origin();
    for (Eigen::Index j = 0; j < i; ++j) g(i, j) = g(j, i) = table.at(sites[j] - sites[i]);
  }
  return g;
}

}  // namespace detail

namespace detail {

inline void finish_weights(EquilibriumMeasure& eq, const Eigen::VectorXd& e,
                           const PotentialOptions& opt) {
  const std::size_t n = eq.support.size();
  eq.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double w = e(static_cast<Eigen::Index>(i));
    if (w < 0.0) {
      if (w < -kNegativeWeightTolerance)
        throw PotentialError("equilibrium_measure: weight " + std::to_string(w) + " at " +
                             eq.support[i].str() + " below -1e-9");
      w = 0.0;
      ++eq.clamped;
    }
    eq.weights[i] = w;
  }
  // Warn once per process; the per-solve count stays in eq.clamped.
  static std::atomic<bool> warned{false};
  if (eq.clamped > 0 && opt.warn_on_clamp && !warned.exchange(true))
    std::clog << "interlace: warning: clamped " << eq.clamped
              << " slightly negative equilibrium weights to 0 (further clamps not reported)\n";
  eq.total_mass = std::accumulate(eq.weights.begin(), eq.weights.end(), 0.0);
}

}  // namespace detail

/// Equilibrium measure of a full box, using its octahedral symmetry: e is
/// constant on orbits of the boundary about the center, which leaves one
/// unknown per orbit. The reduced matrix is symmetrized by the orbit sizes.
inline EquilibriumMeasure box_equilibrium_measure(const LBox& box, const GreenTable& table,
                                                  const PotentialOptions& opt = {}) {
  if (box.dim() != table.d) throw std::invalid_argument("box / green table dimension mismatch");
  if (2 * box.radius > table.radius)
    throw std::out_of_range("box diameter " + std::to_string(2 * box.radius) +
                            " exceeds green table radius " + std::to_string(table.radius));
  EquilibriumMeasure eq;
  eq.support = box.inner_boundary();
  std::sort(eq.support.begin(), eq.support.end());
  const std::size_t n = eq.support.size();

  std::vector<std::size_t> orbit_of(n);
  std::vector<std::size_t> key_to_orbit;
  std::vector<std::size_t> rep;
  std::vector<double> orbit_size;
  {
    std::vector<std::pair<std::size_t, std::size_t>> keyed(n);
    for (std::size_t i = 0; i < n; ++i) keyed[i] = {table.orbit_index(eq.support[i] - box.center), i};
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0 || keyed[i].first != keyed[i - 1].first) {
        rep.push_back(keyed[i].second);
        orbit_size.push_back(0.0);
      }
      orbit_of[keyed[i].second] = rep.size() - 1;
      orbit_size.back() += 1.0;
    }
  }
  const auto m = static_cast<Eigen::Index>(rep.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Site& x = eq.support[rep[static_cast<std::size_t>(i)]];
    for (std::size_t j = 0; j < n; ++j)
      a(i, static_cast<Eigen::Index>(orbit_of[j])) += table.at(eq.support[j] - x);
  }
  // |O_i| a_ij = sum over x in O_i, y in O_j of g(x - y), which is symmetric.
  Eigen::VectorXd sizes(m);
  for (Eigen::Index i = 0; i < m; ++i) sizes(i) = orbit_size[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd b = sizes.asDiagonal() * a;
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (b + b.transpose()));
  if (llt.info() != Eigen::Success)
    throw PotentialError("box_equilibrium_measure: reduced matrix not positive definite");
  const double rc = llt.rcond();
  eq.condition_estimate = rc > 0.0 ? 1.0 / rc : INFINITY;
  const Eigen::VectorXd reduced = llt.solve(sizes);
  Eigen::VectorXd e(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) e(static_cast<Eigen::Index>(i)) = reduced(static_cast<Eigen::Index>(orbit_of[i]));
  detail::finish_weights(eq, e, opt);
  return eq;
}

/// Equilibrium measure of a finite nonempty K.
///
/// Solves sum_{y in dK} g(x, y) e(y) = 1 for x in dK, dK the inner boundary;
/// e vanishes on the interior of K. Full boxes go through the symmetric
/// reduction above.
inline EquilibriumMeasure equilibrium_measure(const SiteSet& k, const GreenTable& table,
                                              const PotentialOptions& opt = {}) {
  if (k.empty()) throw std::invalid_argument("equilibrium_measure: K must be nonempty");
  detail::require_in_table(k, table);
  if (opt.exploit_symmetry && k.size() > 1) {
    const LBox bb = k.bounding_box();
    if (bb.site_count() == k.size()) return box_equilibrium_measure(bb, table, opt);
  }

  EquilibriumMeasure eq;
  eq.support = k.inner_boundary();
  const std::size_t n = eq.support.size();
  if (n > opt.hard_limit)
    throw PotentialError("equilibrium_measure: boundary of " + std::to_string(n) +
                         " sites exceeds the solver limit");

  const Eigen::MatrixXd g = detail::green_matrix(eq.support, table);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  Eigen::VectorXd e;
  if (n <= opt.dense_limit) {
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success)
      throw PotentialError("equilibrium_measure: Green matrix not positive definite; "
                           "use a more accurate green table");
    const double rc = llt.rcond();
    eq.condition_estimate = rc > 0.0 ? 1.0 / rc : INFINITY;
    if (eq.condition_estimate > kMaxConditionNumber)
      throw PotentialError("equilibrium_measure: Green matrix condition estimate " +
                           std::to_string(eq.condition_estimate) +
                           " above 1e12; use a more accurate green table");
    e = llt.solve(ones);
  } else {
    eq.used_iterative = true;
    e = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / table.origin());
    auto apply = [&g](const Eigen::VectorXd& p, Eigen::VectorXd& out) {
      out.noalias() = g.selfadjointView<Eigen::Lower>() * p;
    };
    const CgResult cg = conjugate_gradient(apply, g.diagonal(), ones, e, opt.cg_tolerance,
                                           static_cast<int>(std::max<std::size_t>(1000, n)));
    if (!cg.converged)
      throw PotentialError("equilibrium_measure: CG stalled at relative residual " +
                           std::to_string(cg.relative_residual));
  }

  detail::finish_weights(eq, e, opt);
  return eq;
}

/// cap(K) = total mass of e_K; cap of the empty set is 0.
inline double capacity(const SiteSet& k, const GreenTable& table, const PotentialOptions& opt = {}) {
  if (k.empty()) return 0.0;
  return equilibrium_measure(k, table, opt).total_mass;
}

/// E(nu) = sum_{x,y} g(x, y) nu(x) nu(y).
inline double energy(const FiniteMeasure& nu, const GreenTable& table) {
  nu.validate();
  double e = 0.0;
  for (std::size_t i = 0; i < nu.support.size(); ++i) {
    e += table.origin() * nu.weights[i] * nu.weights[i];
    for (std::size_t j = 0; j < i; ++j)
      e += 2.0 * table.at(nu.support[j] - nu.support[i]) * nu.weights[i] * nu.weights[j];
  }
  return e;
}

/// Normalized equilibrium measure as a FiniteMeasure.
inline FiniteMeasure normalized_equilibrium(const EquilibriumMeasure& eq) {
  FiniteMeasure nu{eq.support, eq.normalized(), true};
  // Renormalize so the probability flag holds to rounding.
  const double s = std::accumulate(nu.weights.begin(), nu.weights.end(), 0.0);
  for (double& w : nu.weights) w /= s;
  return nu;
}

/// P_x[H_K < inf] = sum_y g(x, y) e_K(y).
inline double hitting_probability(const Site& x, const EquilibriumMeasure& eq,
                                  const GreenTable& table) {
  double p = 0.0;
  for (std::size_t i = 0; i < eq.support.size(); ++i)
    p += table.at(eq.support[i] - x) * eq.weights[i];
  return p;
}

inline double hitting_probability(const Site& x, const SiteSet& k, const GreenTable& table) {
  if (k.empty()) return 0.0;
  return hitting_probability(x, equilibrium_measure(k, table), table);
}

struct PoissonTailReport {
  double lambda = 0.0;
  std::int64_t samples = 0;
  /// Empirical P[lambda/2 <= xi <= 2 lambda].
  double empirical = 0.0;
  double std_error = 0.0;
  /// 1 - 2 exp(-lambda/10)
  double bound = 0.0;
  /// Empirical frequency more than 4 standard errors below the bound.
  bool violated = false;
};

inline PoissonTailReport poisson_tail_check(double lambda, std::int64_t samples, RngStream rng) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("poisson_tail_check: lambda must be positive");
  if (samples < 1) throw std::invalid_argument("poisson_tail_check: samples must be >= 1");
  PoissonTailReport r;
  r.lambda = lambda;
  r.samples = samples;
  std::int64_t inside = 0;
  for (std::int64_t i = 0; i < samples; ++i) {
    const auto xi = static_cast<double>(rng.poisson(lambda));
    if (xi >= lambda / 2.0 && xi <= 2.0 * lambda) ++inside;
  }
  r.empirical = static_cast<double>(inside) / static_cast<double>(samples);
  r.std_error = std::sqrt(std::max(r.empirical * (1.0 - r.empirical), 1.0 / samples) / samples);
  r.bound = 1.0 - 2.0 * std::exp(-lambda / 10.0);
  r.violated = r.empirical < r.bound - 4.0 * r.std_error;
  return r;
}

}  // namespace interlace
