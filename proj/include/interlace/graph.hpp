#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "interlace/lattice.hpp"

namespace interlace {

/// Disjoint-set forest with path halving and union by size.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) noexcept {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) noexcept {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

  bool connected(std::size_t a, std::size_t b) noexcept { return find(a) == find(b); }
  std::size_t size() const noexcept { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

/// Subgraph of Z^d inside a window: traversed vertices and edges, with the
/// exact connected-component partition. Immutable once built.
class InterlacementGraph {
 public:
  using Edge = std::pair<std::uint32_t, std::uint32_t>;

  InterlacementGraph() = default;

  /// Vertices may repeat; every edge must join nearest neighbors that are
  /// both in `vertices` (or both in the window, in which case they are added).
  InterlacementGraph(LBox window, std::vector<Site> vertices,
                     const std::vector<std::pair<Site, Site>>& edges)
      : window_(std::move(window)) {
    for (const auto& [a, b] : edges) {
      vertices.push_back(a);
      vertices.push_back(b);
    }
    std::sort(vertices.begin(), vertices.end());
    vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
    vertices_ = std::move(vertices);
    index_.reserve(vertices_.size());
    for (std::uint32_t i = 0; i < vertices_.size(); ++i) {
      if (!window_.contains(vertices_[i]))
        throw std::invalid_argument("graph vertex " + vertices_[i].str() + " outside window");
      index_.emplace(vertices_[i], i);
    }
    edges_.reserve(edges.size());
    for (const auto& [a, b] : edges) {
      if ((a - b).norm1() != 1) throw std::invalid_argument("graph edge is not nearest-neighbor");
      std::uint32_t i = index_.at(a), j = index_.at(b);
      if (i > j) std::swap(i, j);
      edges_.emplace_back(i, j);
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    build_adjacency();
    build_components();
  }

  /// Sorted unique in-window vertices and index edges; skips validation.
  struct Presorted {};
  InterlacementGraph(Presorted, LBox window, std::vector<Site> vertices, std::vector<Edge> edges)
      : window_(std::move(window)), vertices_(std::move(vertices)), edges_(std::move(edges)) {
    index_.reserve(vertices_.size());
    for (std::uint32_t i = 0; i < vertices_.size(); ++i) index_.emplace(vertices_[i], i);
    std::sort(edges_.begin(), edges_.end());
    build_adjacency();
    build_components();
  }

  /// Every site of the box with every nearest-neighbor edge inside it.
  static InterlacementGraph full_box(const LBox& box) {
    std::vector<Site> v = box.sites();
    std::vector<std::pair<Site, Site>> e;
    for (const Site& x : v)
      for (int i = 0; i < x.dim(); ++i) {
        const Site y = x.neighbor(2u * i);
        if (box.contains(y)) e.emplace_back(x, y);
      }
    return InterlacementGraph(box, std::move(v), e);
  }

  const LBox& window() const noexcept { return window_; }
  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Site>& vertices() const noexcept { return vertices_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  bool empty() const noexcept { return vertices_.empty(); }

  std::optional<std::uint32_t> index_of(const Site& x) const {
    auto it = index_.find(x);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool has_vertex(const Site& x) const { return index_.contains(x); }

  bool has_edge(const Site& a, const Site& b) const {
    auto ia = index_of(a), ib = index_of(b);
    if (!ia || !ib) return false;
    for (auto n : neighbors(*ia))
      if (n == *ib) return true;
    return false;
  }

  /// Position of the edge {i, j} in edges(), if present.
  std::optional<std::size_t> edge_index(std::uint32_t i, std::uint32_t j) const {
    if (i > j) std::swap(i, j);
    auto it = std::lower_bound(edges_.begin(), edges_.end(), Edge{i, j});
    if (it == edges_.end() || *it != Edge{i, j}) return std::nullopt;
    return static_cast<std::size_t>(it - edges_.begin());
  }

  std::span<const std::uint32_t> neighbors(std::uint32_t v) const noexcept {
    return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
  }

  /// Component label in [0, component_count()), numbered by smallest vertex.
  std::uint32_t component(std::uint32_t v) const noexcept { return labels_[v]; }
  std::size_t component_count() const noexcept { return component_sizes_.size(); }
  const std::vector<std::size_t>& component_sizes() const noexcept { return component_sizes_; }
  std::size_t largest_component() const noexcept {
    return component_sizes_.empty()
               ? 0
               : *std::max_element(component_sizes_.begin(), component_sizes_.end());
  }

  /// Both sites are vertices and lie in the same component.
  bool connected(const Site& a, const Site& b) const {
    auto ia = index_of(a), ib = index_of(b);
    return ia && ib && labels_[*ia] == labels_[*ib];
  }

  /// Vertices in the component of x (empty when x is not a vertex).
  std::vector<Site> component_sites(const Site& x) const {
    std::vector<Site> out;
    auto ix = index_of(x);
    if (!ix) return out;
    for (std::uint32_t v = 0; v < vertices_.size(); ++v)
      if (labels_[v] == labels_[*ix]) out.push_back(vertices_[v]);
    return out;
  }

  /// Induced subgraph on a sub-box: vertices inside it and edges with both
  /// endpoints inside it.
  InterlacementGraph restricted_to(const LBox& sub) const {
    if (sub.dim() != window_.dim()) throw std::invalid_argument("restricted_to: dimension mismatch");
    constexpr std::uint32_t kOut = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> renum(vertices_.size(), kOut);
    std::vector<Site> v;
    for (std::uint32_t i = 0; i < vertices_.size(); ++i)
      if (sub.contains(vertices_[i])) {
        renum[i] = static_cast<std::uint32_t>(v.size());
        v.push_back(vertices_[i]);
      }
    std::vector<Edge> e;
    for (const auto& [i, j] : edges_)
      if (renum[i] != kOut && renum[j] != kOut) e.emplace_back(renum[i], renum[j]);
    return InterlacementGraph(Presorted{}, sub, std::move(v), std::move(e));
  }

 private:
  void build_adjacency() {
    offsets_.assign(vertices_.size() + 1, 0);
    for (const auto& [i, j] : edges_) {
      ++offsets_[i + 1];
      ++offsets_[j + 1];
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
    adjacency_.resize(2 * edges_.size());
    std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (const auto& [i, j] : edges_) {
      adjacency_[fill[i]++] = j;
      adjacency_[fill[j]++] = i;
    }
  }

  void build_components() {
    UnionFind uf(vertices_.size());
    for (const auto& [i, j] : edges_) uf.unite(i, j);
    labels_.assign(vertices_.size(), 0);
    std::unordered_map<std::size_t, std::uint32_t> root_label;
    for (std::uint32_t v = 0; v < vertices_.size(); ++v) {
      auto [it, inserted] = root_label.try_emplace(uf.find(v),
                                                   static_cast<std::uint32_t>(root_label.size()));
      if (inserted) component_sizes_.push_back(0);
      labels_[v] = it->second;
      ++component_sizes_[it->second];
    }
  }

  LBox window_;
  std::vector<Site> vertices_;
  std::unordered_map<Site, std::uint32_t, SiteHash> index_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> adjacency_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::size_t> component_sizes_;
};

/// Accumulates traversed vertices and edges, then builds the graph.
/// Windows of up to kDenseLimit sites use bitmaps indexed by position in the
/// box; larger ones fall back to hash sets.
class GraphBuilder {
 public:
  static constexpr std::uint64_t kDenseLimit = std::uint64_t{1} << 26;

  explicit GraphBuilder(LBox window) : window_(std::move(window)) {
    const std::uint64_t n = window_.site_count();
    if (n > kDenseLimit) return;
    dense_ = true;
    const int d = window_.dim();
    std::uint64_t stride = 1;
    for (int i = d - 1; i >= 0; --i) {
      stride_[i] = stride;
      stride *= static_cast<std::uint64_t>(2 * window_.radius + 1);
    }
    vbits_.assign((n + 63) / 64, 0);
    ebits_.assign(static_cast<std::size_t>(d), std::vector<std::uint64_t>((n + 63) / 64, 0));
  }

  const LBox& window() const noexcept { return window_; }

  void add_vertex(const Site& x) {
    if (!window_.contains(x)) return;
    if (dense_)
      set(vbits_, linear(x));
    else
      vertices_.insert(x);
  }

  /// Endpoints in the window become vertices; the edge is recorded only if
  /// both are.
  void add_step(const Site& from, const Site& to) {
    const bool in_from = window_.contains(from), in_to = window_.contains(to);
    if (!in_from || !in_to) {
      if (in_from) add_vertex(from);
      if (in_to) add_vertex(to);
      return;
    }
    const bool ordered = from < to;
    const Site& lo = ordered ? from : to;
    if (dense_) {
      int axis = 0;
      while (from[axis] == to[axis]) ++axis;
      const std::uint64_t a = linear(lo);
      set(vbits_, a);
      set(vbits_, a + stride_[axis]);
      set(ebits_[static_cast<std::size_t>(axis)], a);
      return;
    }
    vertices_.insert(from);
    vertices_.insert(to);
    edges_.insert({lo, ordered ? to : from});
  }

  InterlacementGraph build() const {
    if (!dense_) {
      std::vector<Site> v(vertices_.begin(), vertices_.end());
      std::vector<std::pair<Site, Site>> e(edges_.begin(), edges_.end());
      return InterlacementGraph(window_, std::move(v), e);
    }
    const int d = window_.dim();
    const int side = 2 * window_.radius + 1;
    std::vector<Site> v;
    std::vector<std::uint64_t> pos;
    for (std::size_t w = 0; w < vbits_.size(); ++w)
      for (std::uint64_t bits = vbits_[w]; bits; bits &= bits - 1)
        pos.push_back(64 * w + static_cast<std::uint64_t>(std::countr_zero(bits)));
    v.reserve(pos.size());
    for (std::uint64_t a : pos) {
      Site x(d);
      std::uint64_t rest = a;
      for (int i = d - 1; i >= 0; --i) {
        x[i] = window_.center[i] - window_.radius + static_cast<int>(rest % side);
        rest /= side;
      }
      v.push_back(x);
    }
    std::vector<InterlacementGraph::Edge> e;
    for (std::uint32_t k = 0; k < pos.size(); ++k)
      for (int axis = 0; axis < d; ++axis)
        if (test(ebits_[static_cast<std::size_t>(axis)], pos[k])) {
          const std::uint64_t b = pos[k] + stride_[axis];
          const auto j = static_cast<std::uint32_t>(std::lower_bound(pos.begin(), pos.end(), b) - pos.begin());
          e.emplace_back(k, j);
        }
    return InterlacementGraph(InterlacementGraph::Presorted{}, window_, std::move(v), std::move(e));
  }

 private:
  struct PairHash {
    std::size_t operator()(const std::pair<Site, Site>& p) const noexcept {
      return p.first.hash() ^ (p.second.hash() * 0x9E3779B97F4A7C15ull);
    }
  };

  std::uint64_t linear(const Site& x) const noexcept {
    std::uint64_t a = 0;
    for (int i = 0; i < x.dim(); ++i)
      a += static_cast<std::uint64_t>(x[i] - window_.center[i] + window_.radius) * stride_[i];
    return a;
  }
  static void set(std::vector<std::uint64_t>& bits, std::uint64_t a) { bits[a >> 6] |= std::uint64_t{1} << (a & 63); }
  static bool test(const std::vector<std::uint64_t>& bits, std::uint64_t a) { return (bits[a >> 6] >> (a & 63)) & 1u; }

  LBox window_;
  bool dense_ = false;
  std::array<std::uint64_t, kMaxDim> stride_{};
  std::vector<std::uint64_t> vbits_;
  std::vector<std::vector<std::uint64_t>> ebits_;
  std::unordered_set<Site, SiteHash> vertices_;
  std::unordered_set<std::pair<Site, Site>, PairHash> edges_;
};

}  // namespace interlace
