#include <gtest/gtest.h>

#include <Eigen/Sparse>

#include "interlace/lattice.hpp"
#include "interlace/stats.hpp"

using namespace interlace;

TEST(Chebyshev, Examples) {
  EXPECT_EQ(chebyshev_distance(Site{0, 0, 0}, Site{0, 0, 0}), 0);
  EXPECT_EQ(chebyshev_distance(Site{1, -2, 3}, Site{0, 0, 0}), 3);
  EXPECT_EQ(chebyshev_distance(Site{5, 5, 5}, Site{2, 9, 5}), 4);
  EXPECT_THROW(chebyshev_distance(Site{0, 0, 0}, Site{0, 0, 0, 0}), std::invalid_argument);
}

TEST(Site, DimensionRange) {
  EXPECT_THROW(Site(2), std::invalid_argument);
  EXPECT_THROW(Site(7), std::invalid_argument);
  EXPECT_NO_THROW(Site(6));
}

TEST(Site, StepsAndNeighbors) {
  const Site o = Site::origin(4);
  for (unsigned k = 0; k < 8; ++k) {
    const Site n = o.neighbor(k);
    EXPECT_EQ(n.norm1(), 1);
    EXPECT_EQ(n[k / 2], k % 2 ? -1 : 1);
  }
  EXPECT_EQ(Site::unit(3, 2, -1), (Site{0, 0, -1}));
}

TEST(LBox, CountsAndMembership) {
  const LBox b(Site{1, 1, 1}, 2);
  EXPECT_EQ(b.site_count(), 125u);
  EXPECT_EQ(b.sites().size(), 125u);
  EXPECT_TRUE(b.contains(Site{3, -1, 1}));
  EXPECT_FALSE(b.contains(Site{4, 1, 1}));
  EXPECT_EQ(b.inner_boundary().size(), 125u - 27u);
  const auto sorted_sites = b.sites();
  EXPECT_TRUE(std::is_sorted(sorted_sites.begin(), sorted_sites.end()));
  EXPECT_EQ(LBox::ball(3, 0).site_count(), 1u);
}

TEST(SiteSet, Operations) {
  const SiteSet a{Site{0, 0, 0}, Site{1, 0, 0}, Site{1, 0, 0}};
  const SiteSet b{Site{1, 0, 0}, Site{5, 0, 0}};
  EXPECT_EQ(a.size(), 2u);
  EXPECT_EQ(a.united(b).size(), 3u);
  EXPECT_EQ(a.united(b).diameter(), 5);
  EXPECT_TRUE((SiteSet{Site{1, 0, 0}}.is_subset_of(a)));
  const LBox bb = b.bounding_box();
  EXPECT_TRUE(bb.contains(Site{1, 0, 0}));
  EXPECT_TRUE(bb.contains(Site{5, 0, 0}));
  EXPECT_EQ(bb.radius, 2);
  EXPECT_EQ(SiteSet::box(LBox::ball(3, 1)).inner_boundary().size(), 26u);
}

TEST(LatticePath, Structure) {
  LatticePath p{{Site{0, 0, 0}, Site{1, 0, 0}, Site{1, 1, 0}}};
  EXPECT_TRUE(p.is_nearest_neighbor());
  EXPECT_TRUE(p.is_simple());
  p.vertices.push_back(Site{1, 0, 0});
  EXPECT_TRUE(p.is_nearest_neighbor());
  EXPECT_FALSE(p.is_simple());
  p.vertices.push_back(Site{3, 0, 0});
  EXPECT_FALSE(p.is_nearest_neighbor());
}

TEST(SrwRun, StepCapZeroGivesSingleVertex) {
  RngStream r(1, 1);
  const Walk w = srw_run(Site::origin(3), r, StopRule::steps(0));
  EXPECT_EQ(w.path.vertices.size(), 1u);
  EXPECT_EQ(w.reason, StopReason::kStepCap);
}

TEST(SrwRun, StartOutsideBox) {
  RngStream r(1, 1);
  const Walk w = srw_run(Site{5, 0, 0}, r, StopRule::exit(LBox::ball(3, 2)));
  EXPECT_EQ(w.path.vertices.size(), 1u);
  EXPECT_EQ(w.reason, StopReason::kAlreadyOutside);
}

TEST(SrwRun, StopIsCheckedAfterEachStep) {
  RngStream r(1, 2);
  const Walk w = srw_run(Site::origin(3), r, StopRule::exit(LBox::ball(3, 0)));
  ASSERT_EQ(w.path.vertices.size(), 2u);
  EXPECT_EQ(w.path.vertices[1].norm1(), 1);
  EXPECT_EQ(w.reason, StopReason::kExitedBox);
}

TEST(SrwRun, ExitPathEndsJustOutside) {
  RngStream r(3, 3);
  const LBox box = LBox::ball(3, 4);
  for (int i = 0; i < 50; ++i) {
    const Walk w = srw_run(Site::origin(3), r, StopRule::exit_or_steps(box, 100000));
    ASSERT_TRUE(w.path.is_nearest_neighbor());
    ASSERT_EQ(w.reason, StopReason::kExitedBox);
    EXPECT_EQ(w.path.vertices.back().norm_inf(), 5);
    for (std::size_t k = 0; k + 1 < w.path.vertices.size(); ++k)
      ASSERT_TRUE(box.contains(w.path.vertices[k]));
  }
}

TEST(SrwRun, Reproducible) {
  RngStream a(77, 5), b(77, 5);
  const Walk wa = srw_run(Site{1, 2, 3}, a, StopRule::steps(500));
  const Walk wb = srw_run(Site{1, 2, 3}, b, StopRule::steps(500));
  EXPECT_EQ(wa.path.vertices, wb.path.vertices);
  EXPECT_EQ(wa.path.length(), 500u);
}

TEST(SrwRun, OneStepLawIsUniform) {
  std::vector<double> counts(6, 0.0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    RngStream r(5, static_cast<std::uint64_t>(i));
    const Walk w = srw_run(Site::origin(3), r, StopRule::steps(1));
    ASSERT_EQ(w.path.vertices.size(), 2u);
    const Site& x = w.path.vertices[1];
    for (unsigned k = 0; k < 6; ++k)
      if (x == Site::origin(3).neighbor(k)) counts[k] += 1.0;
  }
  const double sigma = std::sqrt(n * (1.0 / 6) * (5.0 / 6));
  for (double c : counts) EXPECT_NEAR(c, n / 6.0, 4 * sigma);
}

TEST(SrwRun, MarginalChiSquare) {
  RngStream r(6, 0);
  std::vector<double> counts(6, 0.0);
  Site x = Site::origin(3);
  for (int i = 0; i < 100000; ++i) {
    const Site before = x;
    random_step(x, r);
    for (unsigned k = 0; k < 6; ++k)
      if (x == before.neighbor(k)) counts[k] += 1.0;
  }
  EXPECT_GT(stats::chi_square_test(counts, std::vector<double>(6, 100000 / 6.0)).p_value, 1e-4);
}

// Expected exit time of B(0, R) from the center, against the solution of the
// discrete Poisson equation (I - P) u = 1 on B, u = 0 outside.
TEST(SrwRun, MeanExitTimeMatchesPoissonEquation) {
  const int d = 3, radius = 5;
  const LBox box = LBox::ball(d, radius);
  const std::vector<Site> sites = box.sites();
  auto index = [&](const Site& x) {
    return static_cast<int>(std::lower_bound(sites.begin(), sites.end(), x) - sites.begin());
  };
  std::vector<Eigen::Triplet<double>> trips;
  for (const Site& x : sites) {
    const int i = index(x);
    trips.emplace_back(i, i, 2.0 * d);
    for (unsigned k = 0; k < 2 * d; ++k) {
      const Site y = x.neighbor(k);
      if (box.contains(y)) trips.emplace_back(i, index(y), -1.0);
    }
  }
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  const Eigen::VectorXd u = solver.solve(Eigen::VectorXd::Constant(n, 2.0 * d));
  const double exact = u(index(Site::origin(d)));

  const int replicas = 100000;
  std::vector<double> times;
  times.reserve(replicas);
  for (int i = 0; i < replicas; ++i) {
    RngStream r(8, static_cast<std::uint64_t>(i));
    times.push_back(static_cast<double>(srw_run(Site::origin(d), r, StopRule::exit(box)).path.length()));
  }
  const double se = stats::stddev(times) / std::sqrt(replicas);
  EXPECT_NEAR(stats::mean(times), exact, 3 * se);
}
