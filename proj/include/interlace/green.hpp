#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "interlace/lattice.hpp"

namespace interlace {

namespace detail {

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

/// out[n] = exp(-s) I_n(s) for n = 0..out.size()-1, s > 0.
///
/// Miller's backward recurrence b_{n-1} = b_{n+1} + (2n/s) b_n started far
/// enough out that I_N/I_0 < 1e-17, normalized with sum_{n in Z} I_n(s) = e^s.
inline void scaled_bessel_i(double s, std::span<double> out) {
  const int nmax = static_cast<int>(out.size()) - 1;
  const int start = nmax + static_cast<int>(10.0 * std::sqrt(s)) + 40;
  double b_next = 0.0;
  double b = 1e-280;
  double sum = 0.0;
  std::fill(out.begin(), out.end(), 0.0);
  for (int n = start; n >= 1; --n) {
    if (n <= nmax) out[n] = b;
    sum += 2.0 * b;
    const double b_prev = b_next + (2.0 * n / s) * b;
    b_next = b;
    b = b_prev;
    if (b > 1e250) {
      b *= 1e-250;
      b_next *= 1e-250;
      sum *= 1e-250;
      for (int k = n; k <= std::min(nmax, start); ++k) out[k] *= 1e-250;
    }
  }
  out[0] = b;
  sum += b;
  for (double& v : out) v /= sum;
}

inline double binomial(int n, int k) {
  if (k < 0 || n < k) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

}  // namespace detail

/// Thrown when a requested accuracy cannot be met by the given horizon.
class GreenAccuracyError : public std::runtime_error {
 public:
  GreenAccuracyError(double achieved, double requested)
      : std::runtime_error("green table tail bound " + std::to_string(achieved) +
                           " exceeds tolerance " + std::to_string(requested) +
                           "; increase the horizon"),
        achieved_tail_bound(achieved) {}
  double achieved_tail_bound;
};

/// Green function g(x) = sum_t P_0[X(t) = x] of simple random walk on Z^d,
/// tabulated for |x|_inf <= radius.
///
/// Values are stored once per octahedral orbit (sorted absolute
/// coordinates), so the symmetries under sign flips and coordinate
/// permutations are exact. Each stored value is the expected time spent at
/// x up to time `horizon` and underestimates g(x) by at most `tail_bound`.
struct GreenTable {
  int d = 3;
  int radius = 0;
  std::int64_t horizon = 0;
  double tail_bound = 0.0;
  std::vector<double> values;

  static std::size_t orbit_count(int d, int radius) {
    return static_cast<std::size_t>(detail::binomial(radius + d, d));
  }

  /// Index of the orbit of x (requires |x|_inf <= radius): with
  /// a_1 <= ... <= a_d the sorted |x_i|, sum_k C(a_k + k - 1, k).
  std::size_t orbit_index(const Site& x) const {
    std::array<int, kMaxDim> a{};
    for (int i = 0; i < d; ++i) a[i] = std::abs(x[i]);
    std::sort(a.begin(), a.begin() + d);
    return sorted_index(a);
  }

  std::size_t orbit_index_sorted(const std::array<int, kMaxDim>& ascending) const noexcept {
    return sorted_index(ascending);
  }

  bool covers(const Site& x) const noexcept { return x.norm_inf() <= radius; }

  /// g(x); throws std::out_of_range beyond the table.
  double at(const Site& x) const {
    if (x.dim() != d) throw std::invalid_argument("green table dimension mismatch");
    if (!covers(x))
      throw std::out_of_range("green table: |x|_inf = " + std::to_string(x.norm_inf()) +
                              " exceeds table radius " + std::to_string(radius));
    return values[orbit_index(x)];
  }

  double origin() const { return values.at(0); }

  /// Bracket [min, max] of g(x) |x|_inf^{d-2} over r_min <= |x|_inf <= r_max.
  std::pair<double, double> decay_bracket(int r_min, int r_max) const {
    if (r_min < 1 || r_max > radius || r_min > r_max)
      throw std::invalid_argument("decay_bracket: bad range");
    double lo = INFINITY, hi = 0.0;
    for_each_orbit([&](std::span<const int> a, std::size_t idx) {
      const int r = a[d - 1];
      if (r < r_min || r > r_max) return;
      const double scaled = values[idx] * std::pow(static_cast<double>(r), d - 2);
      lo = std::min(lo, scaled);
      hi = std::max(hi, scaled);
    });
    return {lo, hi};
  }

  /// Visit every orbit representative (ascending |coordinates|) with its index.
  template <class F>
  void for_each_orbit(F&& f) const {
    std::array<int, kMaxDim> a{};
    enumerate(d - 1, radius, a, f);
  }

 private:
  std::size_t sorted_index(const std::array<int, kMaxDim>& a) const noexcept {
    static constexpr std::uint64_t kFactorial[kMaxDim + 1] = {1, 1, 2, 6, 24, 120, 720};
    std::size_t idx = 0;
    for (int k = 1; k <= d; ++k) {
      std::uint64_t rising = 1;
      for (int i = 0; i < k; ++i) rising *= static_cast<std::uint64_t>(a[k - 1] + i);
      idx += rising / kFactorial[k];
    }
    return idx;
  }

  template <class F>
  void enumerate(int pos, int upper, std::array<int, kMaxDim>& a, F& f) const {
    if (pos < 0) {
      f(std::span<const int>(a.data(), d), sorted_index(a));
      return;
    }
    for (int v = 0; v <= upper; ++v) {
      a[pos] = v;
      enumerate(pos - 1, v, a, f);
    }
  }
};

/// Bound on the tail integral of sup_x q_t(x) past the horizon, using
/// sup_x q_t(x) <= c_d (d / (2 pi t))^{d/2}.
inline double green_tail_bound(int d, double horizon, double c_d) {
  const double s = horizon / d;
  const double half = d / 2.0;
  return 2.0 * c_d * d * std::pow(2.0 * std::numbers::pi, -half) * std::pow(s, 1.0 - half) /
         (half - 1.0);
}

/// Smallest horizon whose tail bound (with c_d = 1.1) is below `target`.
inline std::int64_t default_green_horizon(int d, double target = 1e-6) {
  check_dimension(d);
  const double half = d / 2.0;
  const double coef = 2.0 * 1.1 * d * std::pow(2.0 * std::numbers::pi, -half) / (half - 1.0);
  const double s = std::pow(target / coef, 1.0 / (1.0 - half));
  return static_cast<std::int64_t>(std::ceil(s * d));
}

/// Tabulate g on |x|_inf <= radius.
///
/// Uses g(x) = int_0^inf q_t(x) dt with q_t the continuous-time (rate 1)
/// walk kernel: the number of visits to x is unchanged by exponential
/// holding times, and q_t factorizes over coordinates as
/// prod_i exp(-t/d) I_{x_i}(t/d). The integral is truncated at `horizon`
/// and evaluated with composite Gauss-Legendre in log t.
inline GreenTable build_green_table(int d, int radius, std::int64_t horizon,
                                    std::optional<double> tolerance = std::nullopt) {
  check_dimension(d);
  if (radius < 1) throw std::invalid_argument("build_green_table: radius must be >= 1");
  if (horizon < 1) throw std::invalid_argument("build_green_table: horizon must be >= 1");

  const double s_max = static_cast<double>(horizon) / d;

  // Quadrature in s = t/d: Gauss-Legendre on [0, min(1, s_max)], then panels
  // of width 1/2 in log s.
  std::vector<double> gl_x, gl_w, gl16_x, gl16_w;
  detail::gauss_legendre(24, gl_x, gl_w);
  detail::gauss_legendre(16, gl16_x, gl16_w);
  std::vector<double> nodes, weights;
  const double s_head = std::min(1.0, s_max);
  for (int i = 0; i < 24; ++i) {
    nodes.push_back(0.5 * s_head * (gl_x[i] + 1.0));
    weights.push_back(0.5 * s_head * gl_w[i]);
  }
  if (s_max > 1.0) {
    const double y_end = std::log(s_max);
    for (double y0 = 0.0; y0 < y_end; y0 += 0.5) {
      const double y1 = std::min(y0 + 0.5, y_end);
      if (y1 - y0 < 1e-15) break;
      for (int i = 0; i < 16; ++i) {
        const double y = y0 + 0.5 * (y1 - y0) * (gl16_x[i] + 1.0);
        const double s = std::exp(y);
        nodes.push_back(s);
        weights.push_back(0.5 * (y1 - y0) * gl16_w[i] * s);
      }
    }
  }
  const std::size_t n_nodes = nodes.size();

  // bessel[n * n_nodes + j] = exp(-s_j) I_n(s_j)
  std::vector<double> bessel(static_cast<std::size_t>(radius + 1) * n_nodes);
  std::vector<double> column(radius + 1);
  double c_d = 1.0;
  for (std::size_t j = 0; j < n_nodes; ++j) {
    detail::scaled_bessel_i(nodes[j], column);
    for (int n = 0; n <= radius; ++n) bessel[n * n_nodes + j] = column[n];
    if (nodes[j] >= 1.0 && nodes[j] >= std::sqrt(s_max))
      c_d = std::max(c_d, std::pow(column[0] * std::sqrt(2.0 * std::numbers::pi * nodes[j]), d));
  }

  GreenTable table;
  table.d = d;
  table.radius = radius;
  table.horizon = horizon;
  table.tail_bound = green_tail_bound(d, static_cast<double>(horizon), c_d);
  table.values.assign(GreenTable::orbit_count(d, radius), 0.0);

  // Nested partial products over descending coordinates.
  std::vector<std::vector<double>> partial(d + 1, std::vector<double>(n_nodes));
  for (std::size_t j = 0; j < n_nodes; ++j) partial[d][j] = weights[j] * d;
  std::array<int, kMaxDim> a{};
  auto recurse = [&](auto&& self, int pos, int upper) -> void {
    for (int v = 0; v <= upper; ++v) {
      a[pos] = v;
      const double* e = &bessel[static_cast<std::size_t>(v) * n_nodes];
      const auto& outer = partial[pos + 1];
      if (pos == 0) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n_nodes; ++j) sum += outer[j] * e[j];
        table.values[table.orbit_index_sorted(a)] = sum;
      } else {
        auto& inner = partial[pos];
        for (std::size_t j = 0; j < n_nodes; ++j) inner[j] = outer[j] * e[j];
        self(self, pos - 1, v);
      }
    }
  };
  recurse(recurse, d - 1, radius);

  if (tolerance && table.tail_bound > *tolerance)
    throw GreenAccuracyError(table.tail_bound, *tolerance);
  return table;
}

/// g(x, y) = g(y - x); range error beyond the table.
inline double green(const GreenTable& table, const Site& x, const Site& y) {
  return table.at(y - x);
}

// ---------------------------------------------------------------------------
// Binary cache: <dir>/green_d{d}_r{radius}_h{horizon}.bin plus a JSON sidecar.

inline std::string green_cache_stem(int d, int radius, std::int64_t horizon) {
  return "green_d" + std::to_string(d) + "_r" + std::to_string(radius) + "_h" +
         std::to_string(horizon);
}

inline constexpr char kGreenMagic[8] = {'I', 'N', 'T', 'L', 'G', 'R', 'N', '1'};

inline void save_green_table(const GreenTable& t, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = green_cache_stem(t.d, t.radius, t.horizon);
  const auto bin_path = dir / (stem + ".bin");
  const auto tmp_path = dir / (stem + ".bin.tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp_path.string());
    const std::int32_t d = t.d, r = t.radius;
    const std::int64_t h = t.horizon;
    const std::uint64_t n = t.values.size();
    out.write(kGreenMagic, sizeof kGreenMagic);
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
    out.write(reinterpret_cast<const char*>(&r), sizeof r);
    out.write(reinterpret_cast<const char*>(&h), sizeof h);
    out.write(reinterpret_cast<const char*>(&t.tail_bound), sizeof t.tail_bound);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    if (!out) throw std::runtime_error("short write to " + tmp_path.string());
  }
  std::filesystem::rename(tmp_path, bin_path);

  nlohmann::json side = {{"format", "interlace-green-v1"},
                         {"d", t.d},
                         {"radius", t.radius},
                         {"horizon", t.horizon},
                         {"tail_bound", t.tail_bound},
                         {"orbits", t.values.size()},
                         {"g0", t.origin()}};
  std::ofstream(dir / (stem + ".json")) << side.dump(2) << "\n";
}

inline std::optional<GreenTable> load_green_table(const std::filesystem::path& dir, int d,
                                                  int radius, std::int64_t horizon) {
  const auto bin_path = dir / (green_cache_stem(d, radius, horizon) + ".bin");
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::int32_t fd = 0, fr = 0;
  std::int64_t fh = 0;
  std::uint64_t n = 0;
  GreenTable t;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&fd), sizeof fd);
  in.read(reinterpret_cast<char*>(&fr), sizeof fr);
  in.read(reinterpret_cast<char*>(&fh), sizeof fh);
  in.read(reinterpret_cast<char*>(&t.tail_bound), sizeof t.tail_bound);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || !std::equal(magic, magic + 8, kGreenMagic) || fd != d || fr != radius ||
      fh != horizon || n != GreenTable::orbit_count(d, radius))
    return std::nullopt;
  t.d = d;
  t.radius = radius;
  t.horizon = horizon;
  t.values.resize(n);
  in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) return std::nullopt;
  return t;
}

/// Cache directory: explicit path, else $INTERLACE_CACHE_DIR, else none.
inline std::optional<std::filesystem::path> green_cache_dir(
    const std::optional<std::filesystem::path>& explicit_dir = std::nullopt) {
  if (explicit_dir) return explicit_dir;
  if (const char* env = std::getenv("INTERLACE_CACHE_DIR"); env && *env)
    return std::filesystem::path(env);
  return std::nullopt;
}

/// Load from the cache if present, else build (and store when a cache exists).
inline GreenTable load_or_build_green_table(
    int d, int radius, std::int64_t horizon = 0,
    const std::optional<std::filesystem::path>& cache = std::nullopt) {
  if (horizon <= 0) horizon = default_green_horizon(d);
  const auto dir = green_cache_dir(cache);
  if (dir) {
    if (auto t = load_green_table(*dir, d, radius, horizon)) return *std::move(t);
  }
  GreenTable t = build_green_table(d, radius, horizon);
  if (dir) save_green_table(t, *dir);
  return t;
}

}  // namespace interlace
