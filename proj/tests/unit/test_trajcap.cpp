#include <gtest/gtest.h>

#include <map>

#include "interlace/trajcap.hpp"
#include "support.hpp"

using namespace interlace;
using interlace::testing::table3;

TEST(FFactor, Examples) {
  EXPECT_EQ(f_factor(1, 5), 1.0);
  EXPECT_EQ(f_factor(100, 3), 10.0);
  EXPECT_EQ(f_factor(1, 4), 1.0);
  EXPECT_NEAR(f_factor(1000, 4), std::log(1000.0), 1e-15);
  EXPECT_EQ(f_factor(12345, 6), 1.0);
  EXPECT_THROW(f_factor(0, 3), std::invalid_argument);
}

TEST(Phi, OneStepIsAUniformNeighbor) {
  std::map<Site, double> hist;
  const int n = 6000;
  for (int i = 0; i < n; ++i) {
    const SiteSet phi = phi_set({Site{2, 2, 2}}, 1, RngStream(40, i));
    ASSERT_EQ(phi.size(), 1u);
    ASSERT_EQ(chebyshev_distance(*phi.begin(), Site{2, 2, 2}), 1);
    ASSERT_FALSE(phi.contains(Site{2, 2, 2}));
    hist[*phi.begin()] += 1.0;
  }
  ASSERT_EQ(hist.size(), 6u);
  std::vector<double> obs;
  for (auto& [_, c] : hist) obs.push_back(c);
  EXPECT_GT(stats::chi_square_test(obs, std::vector<double>(6, n / 6.0)).p_value, 1e-4);
}

TEST(Phi, SizeAndCapacityBounds) {
  const GreenTable& t = table3();
  const std::vector<Site> starts{Site{0, 0, 0}, Site{3, 0, 0}};
  for (int i = 0; i < 200; ++i) {
    const SiteSet phi = phi_set(starts, 32, RngStream(41, i));
    ASSERT_LE(phi.size(), 64u);
    ASSERT_LE(capacity(phi, t), 64.0 / t.origin() * (1 + 1e-12));
  }
  EXPECT_THROW(phi_set(starts, 0, RngStream(1, 1)), std::invalid_argument);
  EXPECT_THROW(phi_set({}, 5, RngStream(1, 1)), std::invalid_argument);
}

TEST(Phi, GrowsWithNUnderCoupledStreams) {
  for (int i = 0; i < 50; ++i) {
    std::vector<Site> starts{Site{0, 0, 0}};
    SiteSet prev = phi_set(starts, 20, RngStream(42, i));
    for (int n = 2; n <= 5; ++n) {
      starts.push_back(Site{n, 0, 0});
      const SiteSet next = phi_set(starts, 20, RngStream(42, i));
      ASSERT_TRUE(prev.is_subset_of(next));
      prev = next;
    }
  }
}

TEST(Psi, EmptySoupAndTruncation) {
  const auto eq = equilibrium_measure(SiteSet{Site{0, 0, 0}}, table3());
  TrajectorySoup empty = sample_fixed_length_soup(1e-12, eq, 10, RngStream(43, 0));
  ASSERT_EQ(empty.count, 0u);
  EXPECT_TRUE(psi_set(empty, 10).empty());
  const TrajectorySoup soup = sample_fixed_length_soup(20.0, eq, 10, RngStream(43, 1));
  ASSERT_GT(soup.count, 0u);
  EXPECT_LE(psi_set(soup, 10).size(), soup.count * 10);
  try {
    psi_set(soup, 11);
    FAIL() << "expected TruncatedSoupError";
  } catch (const TruncatedSoupError& e) {
    EXPECT_NE(std::string(e.what()).find("trajectory 0"), std::string::npos);
  }
}

TEST(IsConnected, SmallCases) {
  EXPECT_TRUE(is_connected(SiteSet{}));
  EXPECT_TRUE(is_connected(SiteSet{Site{1, 1, 1}}));
  EXPECT_TRUE(is_connected(SiteSet{Site{0, 0, 0}, Site{0, 1, 0}, Site{0, 1, 1}}));
  EXPECT_FALSE(is_connected(SiteSet{Site{0, 0, 0}, Site{1, 1, 0}}));
}

TEST(UChain, SingleStageIsPhi) {
  const Site x{1, -1, 0};
  for (int i = 0; i < 20; ++i) {
    const RngStream rng(44, i);
    const UChain c = u_chain(x, 30, 1, 1.0, rng, table3());
    ASSERT_EQ(c.stages.size(), 1u);
    EXPECT_EQ(c.stages[0].sites(), phi_set({x}, 30, rng.substream(0)).sites());
    EXPECT_TRUE(c.connected);
  }
  EXPECT_THROW(u_chain(x, 30, 0, 1.0, RngStream(1, 1), table3()), std::invalid_argument);
  EXPECT_THROW(u_chain(x, 30, 2, 0.0, RngStream(1, 1), table3()), std::invalid_argument);
}

TEST(UChain, UnionWithStartIsConnected) {
  for (int i = 0; i < 100; ++i) {
    const UChain c = u_chain(Site::origin(3), 16, 3, 1.0, RngStream(45, i), table3());
    ASSERT_EQ(c.stages.size(), 3u);
    ASSERT_TRUE(c.connected) << "replica " << i;
    ASSERT_TRUE(is_connected(c.all));
    for (std::size_t k = 0; k + 1 < c.stages.size(); ++k) EXPECT_GE(c.capacities[k], 0.0);
  }
}

TEST(UChain, StageErrorsCarryTheStage) {
  // Stage 2 needs cap(U^(1)), which a radius-2 table cannot hold for T = 200.
  const GreenTable small = build_green_table(3, 2, default_green_horizon(3));
  try {
    u_chain(Site::origin(3), 200, 2, 1.0, RngStream(46, 0), small);
    FAIL() << "expected ChainStageError";
  } catch (const ChainStageError& e) {
    EXPECT_EQ(e.stage, 2);
  }
}

TEST(UChain, ContainmentAtT256) {
  const int replicas = 400;
  const std::int64_t t = 256;
  const int radius = static_cast<int>(std::pow(static_cast<double>(t), 0.75));
  std::size_t inside = 0;
  for (int i = 0; i < replicas; ++i) {
    const UChain c = u_chain(Site::origin(3), t, 1, 1.0, RngStream(47, i), table3());
    inside += std::all_of(c.all.begin(), c.all.end(), [&](const Site& y) { return y.norm_inf() <= radius; });
  }
  EXPECT_GE(double(inside) / replicas, 0.95);
}

TEST(CapacityScaling, SmallGrid) {
  const GreenTable& t = table3();
  const auto reps = capacity_scaling_experiment({{1, 64}, {2, 64}, {4, 64}}, 3, 100, RngStream(48, 0), t);
  ASSERT_EQ(reps.size(), 3u);
  for (const auto& r : reps) {
    EXPECT_EQ(r.upper_bound_violations, 0);
    EXPECT_EQ(r.dropped, 0);
    EXPECT_FALSE(r.flagged);
    EXPECT_NEAR(r.predicted, std::min(r.n * 64.0 / 8.0, 8.0), 1e-12);
    EXPECT_GT(r.fitted_c, 0.0);
  }
  // Coupled streams: cap is nondecreasing in N replica by replica.
  for (std::size_t k = 0; k < reps[0].caps.size(); ++k) {
    EXPECT_LE(reps[0].caps[k], reps[1].caps[k] * (1 + 1e-12));
    EXPECT_LE(reps[1].caps[k], reps[2].caps[k] * (1 + 1e-12));
  }
  EXPECT_THROW(capacity_scaling_experiment({{1, 4}}, 3, 99, RngStream(1, 1), t), std::invalid_argument);
}

TEST(PsiCapacity, CalibratedEventIsLikely) {
  const auto rep = psi_capacity_experiment(SiteSet::box(LBox::ball(3, 4)), 64, 1.0, 1.0 / 3.0, 100, 200,
                                           RngStream(49, 0), table3(96));
  EXPECT_GT(rep.c, 0.0);
  EXPECT_GE(rep.frequency, 0.9);
  EXPECT_THROW(psi_capacity_experiment(SiteSet{}, 64, 1.0, 0.3, 10, 10, RngStream(1, 1), table3()),
               std::invalid_argument);
}

TEST(ClusterCapacity, BoundedByWindowCapacity) {
  const auto rep = cluster_capacity_experiment(3, 1.0, 3, 1.0 / 3.0, 40, RngStream(50, 0), table3(), {}, 8);
  EXPECT_EQ(rep.normalized.size(), 40u);
  EXPECT_EQ(rep.monotonicity_violations, 0);
  EXPECT_GT(rep.c, 0.0);
  EXPECT_LE(rep.failure_frequency, 0.1);
}

TEST(ClusterCapacity, HopelessRejectionAborts) {
  EXPECT_THROW(cluster_capacity_experiment(2, 1e-7, 3, 0.3, 5, RngStream(51, 0), table3(), {}, 4),
               RejectionRateError);
}
