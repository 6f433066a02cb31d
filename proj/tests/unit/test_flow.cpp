#include <gtest/gtest.h>

#include <set>

#include "interlace/flow.hpp"
#include "interlace/stats.hpp"

using namespace interlace;

namespace {

std::shared_ptr<const InterlacementGraph> path_graph(const std::vector<Site>& sites, int radius = 20) {
  std::vector<std::pair<Site, Site>> e;
  for (std::size_t k = 0; k + 1 < sites.size(); ++k) e.emplace_back(sites[k], sites[k + 1]);
  return std::make_shared<InterlacementGraph>(LBox::ball(3, radius), std::vector<Site>{}, e);
}

std::vector<Site> straight(Site from, int axis, int length) {
  std::vector<Site> v{from};
  for (int k = 0; k < length; ++k) {
    from.step(2u * axis);
    v.push_back(from);
  }
  return v;
}

/// Sites of B(0, R) in the tube, by enumerating the balls B(round(n v), n^eps).
std::set<Site> tube_sites(const Paraboloid& p, int radius) {
  std::set<Site> out;
  const LBox box = LBox::ball(p.dim(), radius);
  for (std::int64_t n = 1; n <= 2 * radius + 2; ++n) {
    const int r = static_cast<int>(std::floor(std::pow(static_cast<double>(n), p.eps()) + 1e-12));
    for (const Site& x : LBox(p.center(n), r).sites())
      if (box.contains(x)) out.insert(x);
  }
  return out;
}

}  // namespace

TEST(Paraboloid, Examples) {
  const Paraboloid p({1.0, 0.0, 0.0}, 0.2);
  EXPECT_TRUE(p.contains(p.center(1)));
  EXPECT_TRUE(p.contains(Site{10, 1, -1}));
  EXPECT_FALSE(p.contains(Site{0, 10, 0}));
  EXPECT_FALSE(p.contains(Site{-5, 0, 0}));
  EXPECT_EQ(Paraboloid({0.6, 0.8, 0.0}, 0.3).center(5), (Site{3, 4, 0}));
  // round(2.5) = 3: ties go up.
  EXPECT_EQ(Paraboloid({0.5, std::sqrt(0.75), 0.0}, 0.3).center(5)[0], 3);
  EXPECT_THROW(Paraboloid({1.0, 1.0, 0.0}, 0.2), std::invalid_argument);
  EXPECT_THROW(Paraboloid({1.0, 0.0, 0.0}, 1.0), std::invalid_argument);
}

TEST(Paraboloid, MembershipMatchesBallEnumeration) {
  RngStream r(70, 0);
  for (int k = 0; k < 5; ++k) {
    const Paraboloid p(random_direction(3, r), 0.3);
    const auto tube = tube_sites(p, 10);
    for (const Site& x : LBox::ball(3, 10).sites()) ASSERT_EQ(p.contains(x), tube.count(x) > 0) << x.str();
  }
}

TEST(Paraboloid, MembershipFractionExponent) {
  const double eps = 0.2;
  RngStream r(71, 0);
  const Paraboloid p(random_direction(3, r), eps);
  std::vector<double> x, y;
  for (int radius : {16, 32, 64}) {
    const double frac = static_cast<double>(tube_sites(p, radius).size()) /
                        static_cast<double>(LBox::ball(3, radius).site_count());
    x.push_back(std::log(radius));
    y.push_back(std::log(frac));
  }
  EXPECT_NEAR(stats::regression_slope(x, y), (eps - 1.0) * 2.0, 0.3);
}

TEST(RandomDirection, UnitAndIsotropic) {
  RngStream r(72, 0);
  std::vector<double> first;
  for (int k = 0; k < 20000; ++k) {
    const auto v = random_direction(3, r);
    double n = 0.0;
    for (double c : v) n += c * c;
    ASSERT_NEAR(n, 1.0, 1e-12);
    first.push_back(v[0]);
  }
  // The first coordinate of a uniform point on S^2 is uniform on [-1, 1].
  EXPECT_NEAR(stats::mean(first), 0.0, 4 * std::sqrt(1.0 / 3.0 / 20000));
  EXPECT_NEAR(stats::quantile(first, 0.25), -0.5, 0.03);
}

TEST(DirectionPath, FullBoxAlwaysSucceeds) {
  const auto g = std::make_shared<InterlacementGraph>(InterlacementGraph::full_box(LBox::ball(3, 12)));
  RngStream r(73, 0);
  for (int k = 0; k < 30; ++k) {
    const Paraboloid p(random_direction(3, r), 0.2);
    const DirectionPath d = direction_path(*g, p, LBox::ball(3, 2), 12);
    ASSERT_TRUE(d.found()) << d.failure;
    const LatticePath& path = *d.path;
    EXPECT_TRUE(path.is_simple());
    EXPECT_TRUE(path.is_nearest_neighbor());
    EXPECT_GE(path.vertices.back().norm_inf(), 11);
    for (const Site& x : path.vertices) ASSERT_TRUE(p.contains(x));
  }
}

TEST(DirectionPath, FailureMarkers) {
  const Paraboloid p({1.0, 0.0, 0.0}, 0.2);
  const InterlacementGraph empty(LBox::ball(3, 10), {}, {});
  EXPECT_EQ(direction_path(empty, p, LBox::ball(3, 2), 10).failure, "no seed");
  const auto stub = path_graph(straight(Site{1, 0, 0}, 0, 3), 10);
  const DirectionPath d = direction_path(*stub, p, LBox::ball(3, 2), 10);
  EXPECT_EQ(d.failure, "no path");
  EXPECT_EQ(d.reached, 4);
}

TEST(Flow, UnitPathEnergyIsLength) {
  const auto sites = straight(Site{0, 0, 0}, 1, 7);
  const auto g = path_graph(sites);
  const Flow f = path_flow(g, LatticePath{sites});
  EXPECT_DOUBLE_EQ(flow_energy(f), 7.0);
  EXPECT_DOUBLE_EQ(flow_energy_within(f, LBox::ball(3, 3)), 3.0);
}

TEST(Flow, AntisymmetryAndDivergence) {
  const auto sites = straight(Site{0, 0, 0}, 2, 5);
  const auto g = path_graph(sites);
  Flow f = path_flow(g, LatticePath{sites});
  for (std::size_t k = 0; k + 1 < sites.size(); ++k) {
    EXPECT_EQ(f(sites[k], sites[k + 1]), 1.0);
    EXPECT_EQ(f(sites[k + 1], sites[k]), -1.0);
  }
  EXPECT_EQ(f(sites[0], sites[2]), 0.0);
  EXPECT_EQ(f(sites[0], Site{9, 9, 9}), 0.0);
  const auto div = f.divergence();
  EXPECT_EQ(div[*g->index_of(sites.front())], 1.0);
  EXPECT_EQ(div[*g->index_of(sites.back())], -1.0);
  for (std::size_t k = 1; k + 1 < sites.size(); ++k) EXPECT_EQ(div[*g->index_of(sites[k])], 0.0);
  EXPECT_THROW(f.add(sites[0], sites[2], 1.0), std::invalid_argument);
  const Flow other(path_graph(sites));
  EXPECT_THROW(f.accumulate(other, 1.0), std::invalid_argument);
}

TEST(Flow, AveragingTwoDisjointPathsQuartersEnergy) {
  // Two edge-disjoint routes from 0: along +x (length 6) and +y (length 4).
  const auto a = straight(Site{0, 0, 0}, 0, 6);
  const auto b = straight(Site{0, 0, 0}, 1, 4);
  std::vector<std::pair<Site, Site>> e;
  for (const auto* p : {&a, &b})
    for (std::size_t k = 0; k + 1 < p->size(); ++k) e.emplace_back((*p)[k], (*p)[k + 1]);
  const auto g = std::make_shared<InterlacementGraph>(LBox::ball(3, 10), std::vector<Site>{}, e);
  Flow f(g);
  f.accumulate(path_flow(g, LatticePath{a}), 0.5);
  f.accumulate(path_flow(g, LatticePath{b}), 0.5);
  EXPECT_DOUBLE_EQ(flow_energy(f), (6.0 + 4.0) / 4.0);
  EXPECT_DOUBLE_EQ(f.divergence()[*g->index_of(Site{0, 0, 0})], 1.0);
}

TEST(AveragedFlow, UnitInfluxAndConvexity) {
  const LBox box = LBox::ball(3, 10);
  const auto g = std::make_shared<InterlacementGraph>(InterlacementGraph::full_box(box));
  RngStream r(74, 0);
  std::vector<Paraboloid> dirs;
  for (int k = 0; k < 40; ++k) dirs.emplace_back(random_direction(3, r), 0.2);
  const AveragedFlow avg = averaged_flow(g, dirs, LBox::ball(3, 2), 10);
  EXPECT_EQ(avg.successes, 40);
  EXPECT_EQ(avg.failures, 0);
  const auto div = avg.flow.divergence();
  double influx = 0.0;
  for (const auto& [s, w] : avg.sources) {
    EXPECT_NEAR(div[*g->index_of(s)], w, 1e-12);
    influx += w;
  }
  EXPECT_NEAR(influx, 1.0, 1e-12);
  std::set<Site> ends;
  for (const auto& p : avg.paths) ends.insert(p.vertices.back());
  for (std::uint32_t v = 0; v < g->vertex_count(); ++v) {
    const Site& x = g->vertices()[v];
    const bool source = std::any_of(avg.sources.begin(), avg.sources.end(), [&](auto& s) { return s.first == x; });
    if (!source && !ends.count(x)) EXPECT_NEAR(div[v], 0.0, 1e-9) << x.str();
  }
  EXPECT_LE(flow_energy(avg.flow), stats::mean(avg.path_energies) + 1e-12);
  // antisymmetry
  for (const auto& [i, j] : g->edges())
    ASSERT_EQ(avg.flow(g->vertices()[i], g->vertices()[j]), -avg.flow(g->vertices()[j], g->vertices()[i]));
}

TEST(AveragedFlow, AllFailingDirectionsThrow) {
  const auto g = std::make_shared<InterlacementGraph>(LBox::ball(3, 10), std::vector<Site>{},
                                                      std::vector<std::pair<Site, Site>>{});
  EXPECT_THROW(averaged_flow(g, {Paraboloid({1.0, 0.0, 0.0}, 0.2)}, LBox::ball(3, 2), 10), std::runtime_error);
}

TEST(Resistance, SeriesPath) {
  for (int len : {1, 5, 17}) {
    const auto sites = straight(Site{0, 0, 0}, 0, len);
    const auto g = path_graph(sites);
    const auto r = effective_resistance(*g, sites.front(), SiteSet{sites.back()});
    EXPECT_NEAR(r.value, len, 1e-8 * len);
    EXPECT_TRUE(r.converged);
  }
}

TEST(Resistance, ParallelRoutes) {
  // A 1 x k rectangle: routes of length 1 and 2k + 1 between two corners of
  // the short side, in parallel.
  for (int k : {1, 3, 6}) {
    std::vector<std::pair<Site, Site>> e;
    e.emplace_back(Site{0, 0, 0}, Site{0, 1, 0});
    for (int i = 0; i < k; ++i) {
      e.emplace_back(Site{i, 0, 0}, Site{i + 1, 0, 0});
      e.emplace_back(Site{i, 1, 0}, Site{i + 1, 1, 0});
    }
    e.emplace_back(Site{k, 0, 0}, Site{k, 1, 0});
    const InterlacementGraph g(LBox::ball(3, 10), {}, e);
    const double a = 1.0, b = 2.0 * k + 1.0;
    EXPECT_NEAR(effective_resistance(g, Site{0, 0, 0}, SiteSet{Site{0, 1, 0}}).value, a * b / (a + b), 1e-8);
  }
}

TEST(Resistance, ParallelPathsToASinkSet) {
  // Three disjoint legs of lengths 2, 3, 6 from the origin, all ends are sinks.
  std::vector<std::pair<Site, Site>> e;
  SiteSet sinks;
  std::vector<Site> ends;
  int axis = 0;
  for (int len : {2, 3, 6}) {
    const auto leg = straight(Site{0, 0, 0}, axis++, len);
    for (std::size_t k = 0; k + 1 < leg.size(); ++k) e.emplace_back(leg[k], leg[k + 1]);
    ends.push_back(leg.back());
  }
  const InterlacementGraph g(LBox::ball(3, 10), {}, e);
  EXPECT_NEAR(effective_resistance(g, Site{0, 0, 0}, SiteSet(ends)).value, 1.0 / (1.0 / 2 + 1.0 / 3 + 1.0 / 6),
              1e-8);
}

TEST(Resistance, DegenerateCases) {
  const InterlacementGraph g(LBox::ball(3, 5), {Site{3, 3, 3}}, {{Site{0, 0, 0}, Site{1, 0, 0}}});
  EXPECT_FALSE(effective_resistance(g, Site{0, 0, 0}, SiteSet{Site{3, 3, 3}}).connected());
  EXPECT_FALSE(effective_resistance(g, Site{2, 2, 2}, SiteSet{Site{1, 0, 0}}).connected());
  EXPECT_EQ(effective_resistance(g, Site{0, 0, 0}, SiteSet{Site{0, 0, 0}}).value, 0.0);
}

TEST(Resistance, FullLatticeIncrementsShrink) {
  std::vector<double> values;
  for (int r : {2, 4, 8, 16}) {
    const LBox box = LBox::ball(3, r);
    const auto g = InterlacementGraph::full_box(box);
    const auto res = effective_resistance(g, Site::origin(3), box_boundary_vertices(g, box));
    ASSERT_TRUE(res.converged);
    values.push_back(res.value);
  }
  for (std::size_t k = 1; k < values.size(); ++k) EXPECT_GT(values[k], values[k - 1]);
  for (std::size_t k = 2; k < values.size(); ++k)
    EXPECT_LT(values[k] - values[k - 1], values[k - 1] - values[k - 2]);
  // Bounded by the resistance to infinity, g(0) / 6.
  EXPECT_LT(values.back(), 1.5164 / 6.0);
}
