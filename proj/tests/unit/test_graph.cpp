#include <gtest/gtest.h>

#include <map>
#include <queue>

#include "interlace/graph.hpp"
#include "interlace/rng.hpp"
#include "oracles/graph_oracles.hpp"

using namespace interlace;
using namespace interlace::testing;

TEST(UnionFind, Basics) {
  UnionFind uf(5);
  EXPECT_TRUE(uf.unite(0, 1));
  EXPECT_FALSE(uf.unite(1, 0));
  EXPECT_TRUE(uf.unite(3, 4));
  EXPECT_TRUE(uf.connected(0, 1));
  EXPECT_FALSE(uf.connected(1, 3));
  EXPECT_EQ(uf.size(), 5u);
}

TEST(Graph, UnionFindMatchesBfsOnRandomGraphs) {
  RngStream r(100, 0);
  for (int i = 0; i < 100; ++i) {
    const int d = 3 + static_cast<int>(r.below(2));
    const LBox box = LBox::ball(d, d == 3 ? 3 : 2);
    const InterlacementGraph g = random_graph(r, box, 0.2, 0.1 + 0.4 * r.uniform());
    ASSERT_EQ(label_partition(g), bfs_partition(g)) << "graph " << i;
    std::size_t total = 0;
    for (auto s : g.component_sizes()) total += s;
    EXPECT_EQ(total, g.vertex_count());
  }
}

TEST(Graph, FullBoxCounts) {
  const InterlacementGraph g = InterlacementGraph::full_box(LBox::ball(3, 2));
  EXPECT_EQ(g.vertex_count(), 125u);
  EXPECT_EQ(g.edge_count(), 3u * 5 * 5 * 4);
  EXPECT_EQ(g.component_count(), 1u);
  EXPECT_EQ(g.largest_component(), 125u);
}

TEST(Graph, EdgesAndNeighbors) {
  const LBox box = LBox::ball(3, 3);
  const InterlacementGraph g(box, {Site{3, 3, 3}},
                             {{Site{0, 0, 0}, Site{1, 0, 0}}, {Site{1, 0, 0}, Site{0, 0, 0}},
                              {Site{1, 0, 0}, Site{1, 1, 0}}});
  EXPECT_EQ(g.vertex_count(), 4u);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_TRUE(g.has_edge(Site{1, 0, 0}, Site{0, 0, 0}));
  EXPECT_FALSE(g.has_edge(Site{0, 0, 0}, Site{1, 1, 0}));
  EXPECT_EQ(g.neighbors(*g.index_of(Site{1, 0, 0})).size(), 2u);
  EXPECT_TRUE(g.connected(Site{0, 0, 0}, Site{1, 1, 0}));
  EXPECT_FALSE(g.connected(Site{0, 0, 0}, Site{3, 3, 3}));
  EXPECT_FALSE(g.connected(Site{0, 0, 0}, Site{2, 2, 2}));
  EXPECT_EQ(g.component_count(), 2u);
  EXPECT_EQ(g.component_sites(Site{0, 0, 0}).size(), 3u);
  EXPECT_TRUE(g.component_sites(Site{2, 0, 0}).empty());
}

TEST(Graph, RejectsBadInput) {
  const LBox box = LBox::ball(3, 1);
  EXPECT_THROW(InterlacementGraph(box, {Site{2, 0, 0}}, {}), std::invalid_argument);
  EXPECT_THROW(InterlacementGraph(box, {}, {{Site{0, 0, 0}, Site{1, 1, 0}}}), std::invalid_argument);
}

TEST(Graph, RestrictedTo) {
  const InterlacementGraph g = InterlacementGraph::full_box(LBox::ball(3, 2));
  const InterlacementGraph h = g.restricted_to(LBox::ball(3, 1));
  EXPECT_EQ(h.vertex_count(), 27u);
  EXPECT_EQ(h.edge_count(), 3u * 3 * 3 * 2);
}

TEST(GraphBuilder, KeepsOnlyWindowSteps) {
  GraphBuilder b(LBox::ball(3, 1));
  b.add_vertex(Site{5, 0, 0});
  b.add_step(Site{1, 0, 0}, Site{2, 0, 0});
  b.add_step(Site{0, 0, 0}, Site{1, 0, 0});
  b.add_step(Site{1, 0, 0}, Site{0, 0, 0});
  const auto g = b.build();
  EXPECT_EQ(g.vertex_count(), 2u);
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_FALSE(g.has_vertex(Site{2, 0, 0}));
  // A visit that enters and leaves at once still marks the vertex.
  GraphBuilder touch(LBox::ball(3, 1));
  touch.add_step(Site{2, 1, 0}, Site{1, 1, 0});
  touch.add_step(Site{1, 1, 0}, Site{1, 2, 0});
  const auto t = touch.build();
  EXPECT_EQ(t.vertex_count(), 1u);
  EXPECT_EQ(t.edge_count(), 0u);
}

TEST(GraphBuilder, BitmapAndHashPathsAgree) {
  // B(0, 10) in d = 6 exceeds the bitmap limit; B(0, 3) does not.
  ASSERT_GT(LBox::ball(6, 10).site_count(), GraphBuilder::kDenseLimit);
  GraphBuilder big(LBox::ball(6, 10)), small(LBox::ball(6, 3));
  RngStream rng(7, 3);
  for (int w = 0; w < 20; ++w) {
    Site x(6);
    big.add_vertex(x);
    small.add_vertex(x);
    for (int s = 0; s < 400; ++s) {
      const Site prev = x;
      x.step(rng.below(12));
      big.add_step(prev, x);
      small.add_step(prev, x);
    }
  }
  const auto a = big.build().restricted_to(LBox::ball(6, 3));
  const auto b = small.build();
  EXPECT_EQ(a.vertices(), b.vertices());
  EXPECT_EQ(a.edges(), b.edges());
  EXPECT_EQ(a.component_sizes(), b.component_sizes());
}
