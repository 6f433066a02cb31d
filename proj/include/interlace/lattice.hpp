#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "interlace/rng.hpp"

namespace interlace {

inline constexpr int kMinDim = 3;
inline constexpr int kMaxDim = 6;

inline void check_dimension(int d) {
  if (d < kMinDim || d > kMaxDim)
    throw std::invalid_argument("dimension must be in [3, 6], got " + std::to_string(d));
}

/// A point of Z^d, 3 <= d <= 6. Unused trailing coordinates are kept at zero
/// so that equality and hashing can look at the whole array.
class Site {
 public:
  Site() = default;

  explicit Site(int d) : dim_(static_cast<std::uint8_t>(d)) { check_dimension(d); }

  Site(std::initializer_list<int> coords) : Site(std::span<const int>(coords.begin(), coords.size())) {}

  explicit Site(std::span<const int> coords) : dim_(static_cast<std::uint8_t>(coords.size())) {
    check_dimension(static_cast<int>(coords.size()));
    std::copy(coords.begin(), coords.end(), c_.begin());
  }

  static Site origin(int d) { return Site(d); }

  /// sign * e_axis
  static Site unit(int d, int axis, int sign = 1) {
    Site s(d);
    s.c_[axis] = sign;
    return s;
  }

  int dim() const noexcept { return dim_; }
  int operator[](int i) const noexcept { return c_[i]; }
  int& operator[](int i) noexcept { return c_[i]; }
  std::span<const int> coords() const noexcept { return {c_.data(), dim_}; }

  friend bool operator==(const Site&, const Site&) = default;
  friend auto operator<=>(const Site& a, const Site& b) {
    if (auto cmp = a.dim_ <=> b.dim_; cmp != 0) return cmp;
    return a.c_ <=> b.c_;
  }

  Site& operator+=(const Site& o) {
    require_same_dim(o);
    for (int i = 0; i < dim_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Site& operator-=(const Site& o) {
    require_same_dim(o);
    for (int i = 0; i < dim_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  friend Site operator+(Site a, const Site& b) { return a += b; }
  friend Site operator-(Site a, const Site& b) { return a -= b; }
  friend Site operator-(Site a) {
    for (int i = 0; i < a.dim_; ++i) a.c_[i] = -a.c_[i];
    return a;
  }

  /// |x|_inf
  int norm_inf() const noexcept {
    int m = 0;
    for (int i = 0; i < dim_; ++i) m = std::max(m, std::abs(c_[i]));
    return m;
  }
  int norm1() const noexcept {
    int m = 0;
    for (int i = 0; i < dim_; ++i) m += std::abs(c_[i]);
    return m;
  }

  /// Move to the k-th neighbor, k in [0, 2d): axis k/2, sign + for even k.
  void step(unsigned k) noexcept { c_[k >> 1] += (k & 1u) ? -1 : 1; }

  Site neighbor(unsigned k) const noexcept {
    Site s = *this;
    s.step(k);
    return s;
  }

  std::size_t hash() const noexcept {
    std::uint64_t h = dim_;
    for (int i = 0; i < dim_; ++i)
      h = mix64(h ^ static_cast<std::uint32_t>(c_[i]));
    return static_cast<std::size_t>(h);
  }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < dim_; ++i) {
      if (i) s += ",";
      s += std::to_string(c_[i]);
    }
    return s + ")";
  }

  friend std::ostream& operator<<(std::ostream& os, const Site& s) { return os << s.str(); }

 private:
  void require_same_dim(const Site& o) const {
    if (o.dim_ != dim_) throw std::invalid_argument("site dimension mismatch");
  }

  std::array<int, kMaxDim> c_{};
  std::uint8_t dim_ = 0;
};

struct SiteHash {
  std::size_t operator()(const Site& s) const noexcept { return s.hash(); }
};

/// max_i |x_i - y_i|
inline int chebyshev_distance(const Site& x, const Site& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("chebyshev_distance: dimension mismatch");
  int m = 0;
  for (int i = 0; i < x.dim(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

/// Closed l-infinity ball B(center, radius).
struct LBox {
  Site center;
  int radius = 0;

  LBox() = default;
  LBox(Site c, int r) : center(c), radius(r) {
    if (r < 0) throw std::invalid_argument("LBox radius must be >= 0");
  }
  static LBox ball(int d, int r) { return LBox(Site::origin(d), r); }

  int dim() const noexcept { return center.dim(); }

  bool contains(const Site& x) const noexcept {
    for (int i = 0; i < x.dim(); ++i)
      if (std::abs(x[i] - center[i]) > radius) return false;
    return true;
  }

  std::uint64_t site_count() const noexcept {
    std::uint64_t n = 1;
    for (int i = 0; i < dim(); ++i) n *= static_cast<std::uint64_t>(2 * radius + 1);
    return n;
  }

  /// All sites in lexicographic order.
  std::vector<Site> sites() const {
    std::vector<Site> out;
    out.reserve(site_count());
    Site x = center;
    for (int i = 0; i < dim(); ++i) x[i] = center[i] - radius;
    while (true) {
      out.push_back(x);
      int i = dim() - 1;
      while (i >= 0 && x[i] == center[i] + radius) {
        x[i] = center[i] - radius;
        --i;
      }
      if (i < 0) break;
      ++x[i];
    }
    return out;
  }

  /// Sites with |x - center| == radius, i.e. the inner boundary.
  std::vector<Site> inner_boundary() const {
    std::vector<Site> out;
    for (const Site& x : sites())
      if (chebyshev_distance(x, center) == radius) out.push_back(x);
    return out;
  }

  friend bool operator==(const LBox&, const LBox&) = default;
};

/// Finite subset of Z^d, stored sorted and duplicate-free so iteration
/// order (and everything computed from it) is deterministic.
class SiteSet {
 public:
  SiteSet() = default;
  explicit SiteSet(std::vector<Site> sites) : sites_(std::move(sites)) { normalize(); }
  SiteSet(std::initializer_list<Site> sites) : sites_(sites) { normalize(); }

  static SiteSet box(const LBox& b) { return SiteSet(b.sites()); }

  bool empty() const noexcept { return sites_.empty(); }
  std::size_t size() const noexcept { return sites_.size(); }
  int dim() const noexcept { return sites_.empty() ? 0 : sites_.front().dim(); }
  const std::vector<Site>& sites() const noexcept { return sites_; }
  auto begin() const noexcept { return sites_.begin(); }
  auto end() const noexcept { return sites_.end(); }
  const Site& operator[](std::size_t i) const noexcept { return sites_[i]; }

  bool contains(const Site& x) const {
    return std::binary_search(sites_.begin(), sites_.end(), x);
  }
  bool is_subset_of(const SiteSet& other) const {
    return std::includes(other.sites_.begin(), other.sites_.end(), sites_.begin(), sites_.end());
  }

  SiteSet united(const SiteSet& other) const {
    std::vector<Site> out;
    out.reserve(sites_.size() + other.sites_.size());
    std::set_union(sites_.begin(), sites_.end(), other.sites_.begin(), other.sites_.end(),
                   std::back_inserter(out));
    SiteSet s;
    s.sites_ = std::move(out);
    return s;
  }

  /// Sites of the set with at least one nearest neighbor outside it.
  std::vector<Site> inner_boundary() const {
    std::vector<Site> out;
    for (const Site& x : sites_) {
      for (unsigned k = 0; k < 2u * static_cast<unsigned>(x.dim()); ++k) {
        if (!contains(x.neighbor(k))) {
          out.push_back(x);
          break;
        }
      }
    }
    return out;
  }

  /// max over pairs of |x - y|_inf (0 for sets of size <= 1).
  int diameter() const {
    if (sites_.empty()) return 0;
    int diam = 0;
    for (int i = 0; i < dim(); ++i) {
      auto [lo, hi] = std::minmax_element(sites_.begin(), sites_.end(),
                                          [i](const Site& a, const Site& b) { return a[i] < b[i]; });
      diam = std::max(diam, (*hi)[i] - (*lo)[i]);
    }
    return diam;
  }

  /// Smallest l-infinity box (centered at an integer site) containing the set.
  LBox bounding_box() const {
    if (sites_.empty()) throw std::invalid_argument("bounding_box of empty set");
    Site c(dim());
    int r = 0;
    for (int i = 0; i < dim(); ++i) {
      auto [lo, hi] = std::minmax_element(sites_.begin(), sites_.end(),
                                          [i](const Site& a, const Site& b) { return a[i] < b[i]; });
      const int a = (*lo)[i];
      const int b = (*hi)[i];
      c[i] = a + (b - a) / 2;
      r = std::max(r, std::max(c[i] - a, b - c[i]));
    }
    return LBox(c, r);
  }

  friend bool operator==(const SiteSet&, const SiteSet&) = default;

 private:
  void normalize() {
    std::sort(sites_.begin(), sites_.end());
    sites_.erase(std::unique(sites_.begin(), sites_.end()), sites_.end());
    for (const Site& s : sites_)
      if (s.dim() != sites_.front().dim()) throw std::invalid_argument("SiteSet: mixed dimensions");
  }

  std::vector<Site> sites_;
};

/// Ordered sequence of sites.
struct LatticePath {
  std::vector<Site> vertices;

  std::size_t length() const noexcept { return vertices.empty() ? 0 : vertices.size() - 1; }

  bool is_nearest_neighbor() const {
    for (std::size_t i = 1; i < vertices.size(); ++i) {
      const Site diff = vertices[i] - vertices[i - 1];
      if (diff.norm1() != 1) return false;
    }
    return true;
  }

  bool is_simple() const {
    std::vector<Site> sorted = vertices;
    std::sort(sorted.begin(), sorted.end());
    return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
  }
};

/// When a walk stops. The rule is checked after every step.
struct StopRule {
  std::optional<std::int64_t> step_cap;
  std::optional<LBox> exit_box;

  static StopRule steps(std::int64_t t) { return {t, std::nullopt}; }
  static StopRule exit(const LBox& b) { return {std::nullopt, b}; }
  static StopRule exit_or_steps(const LBox& b, std::int64_t t) { return {t, b}; }
};

enum class StopReason { kStepCap, kExitedBox, kAlreadyOutside };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kStepCap: return "step_cap";
    case StopReason::kExitedBox: return "exited_box";
    case StopReason::kAlreadyOutside: return "already_outside";
  }
  return "?";
}

struct Walk {
  LatticePath path;
  StopReason reason = StopReason::kStepCap;
};

/// Uniformly random nearest-neighbor move.
inline void random_step(Site& x, RngStream& rng) noexcept {
  x.step(rng.below(2u * static_cast<unsigned>(x.dim())));
}

/// Simple random walk from `start` until `stop` fires.
inline Walk srw_run(const Site& start, RngStream& rng, const StopRule& stop) {
  if (!stop.step_cap && !stop.exit_box) throw std::invalid_argument("srw_run: empty stop rule");
  if (stop.step_cap && *stop.step_cap < 0) throw std::invalid_argument("srw_run: negative step cap");
  Walk w;
  w.path.vertices.push_back(start);
  if (stop.exit_box && !stop.exit_box->contains(start)) {
    w.reason = StopReason::kAlreadyOutside;
    return w;
  }
  if (stop.step_cap && *stop.step_cap == 0) {
    w.reason = StopReason::kStepCap;
    return w;
  }
  Site x = start;
  for (std::int64_t t = 1;; ++t) {
    random_step(x, rng);
    w.path.vertices.push_back(x);
    if (stop.exit_box && !stop.exit_box->contains(x)) {
      w.reason = StopReason::kExitedBox;
      return w;
    }
    if (stop.step_cap && t >= *stop.step_cap) {
      w.reason = StopReason::kStepCap;
      return w;
    }
  }
}

}  // namespace interlace

template <>
struct std::hash<interlace::Site> {
  std::size_t operator()(const interlace::Site& s) const noexcept { return s.hash(); }
};
