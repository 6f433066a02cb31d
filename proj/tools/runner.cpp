#include "runner.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#ifndef INTERLACE_VERSION
#define INTERLACE_VERSION "unknown"
#endif

namespace interlace::runner {

namespace {

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::string site_str(const Site& x) { return x.str(); }

// ---------------------------------------------------------------- parameters

json base_params(const std::string& e) {
  if (e == "green") return {{"d", 3}, {"radius", 8}, {"horizon", 0}};
  if (e == "capacity") return {{"d", 3}, {"ball", {1, 2, 3}}, {"point", true}};
  if (e == "sample")
    return {{"d", 3}, {"u", 1.0}, {"window-radius", 5}, {"rho", 0}, {"reentry", true}, {"dump-graph", -1}};
  if (e == "trajcap")
    return {{"d", 3},         {"N", {1}},         {"T", {64, 256, 1024}}, {"eps", 1.0 / 3.0},
            {"chain-T", 256}, {"chain-s", 1},     {"chain-u", 1.0},       {"chain-replicas", 200}};
  if (e == "connectivity")
    return {{"d", 3},
            {"u", 1.0},
            {"R-grid", {4, 8, 16}},
            {"event", "local_uniqueness"},
            {"rho-multiplier", 8},
            {"c-mult", kDefaultCMult}};
  if (e == "flow")
    return {{"d", 3},           {"u", 1.0},        {"eps", 0.2}, {"directions", 200}, {"R-grid", {12, 24, 48}},
            {"start-radius", 4}, {"rho-multiplier", 8}};
  if (e == "resistance") return {{"d", 3}, {"u", 1.0}, {"R-grid", {8, 16, 32}}, {"rho-multiplier", 8}};
  if (e == "all") return json::object();
  throw ConfigError({"unknown experiment '" + e + "' (expected one of " + join(experiment_names(), ", ") + ")"});
}

void merge_into(json& target, const json& patch) {
  for (const auto& [k, v] : patch.items()) target[k] = v;
}

json quick_patch(const std::string& e) {
  if (e == "green") return {{"radius", 3}};
  if (e == "capacity") return {{"ball", {1, 2}}};
  if (e == "sample") return {{"window-radius", 3}};
  if (e == "trajcap") return {{"T", {16, 32}}, {"chain-T", 32}, {"chain-replicas", 20}};
  if (e == "connectivity") return {{"R-grid", {2, 4}}, {"rho-multiplier", 4}};
  if (e == "flow") return {{"R-grid", {6, 12}}, {"directions", 20}, {"start-radius", 2}, {"u", 2.5}};
  if (e == "resistance") return {{"R-grid", {4, 8}}};
  return json::object();
}

json desk_patch(const std::string& e) {
  if (e == "capacity") return {{"ball", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16}}};
  if (e == "trajcap") return {{"chain-replicas", 1000}};
  // At u = 1 the eps = 0.2 tubes almost never hold a path at R <= 48.
  if (e == "flow") return {{"u", 5.0}};
  return json::object();
}

bool same_kind(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array() || v.empty()) return false;
    return std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number_integer(); });
  }
  return false;
}

std::string kind_name(const json& def) {
  if (def.is_boolean()) return "a boolean";
  if (def.is_number_integer()) return "an integer";
  if (def.is_number()) return "a number";
  if (def.is_string()) return "a string";
  return "a nonempty list of integers";
}

std::uint64_t experiment_stream(const std::string& e) {
  const auto& names = experiment_names();
  return static_cast<std::uint64_t>(std::find(names.begin(), names.end(), e) - names.begin());
}

std::vector<int> int_list(const json& v) {
  if (v.is_number_integer()) return {v.get<int>()};
  return v.get<std::vector<int>>();
}

// ---------------------------------------------------------------- orbit enumeration

void orbit_reps(int d, int radius, std::vector<Site>& out) {
  std::vector<int> a(static_cast<std::size_t>(d), 0);
  std::function<void(int, int)> rec = [&](int pos, int lo) {
    if (pos == d) {
      Site x(d);
      for (int i = 0; i < d; ++i) x[i] = a[static_cast<std::size_t>(d - 1 - i)];
      out.push_back(x);
      return;
    }
    for (int v = lo; v <= radius; ++v) {
      a[static_cast<std::size_t>(pos)] = v;
      rec(pos + 1, v);
    }
  };
  rec(0, 0);
}

double harmonic_defect(const GreenTable& t, const Site& x) {
  double avg = 0.0;
  for (unsigned k = 0; k < 2u * t.d; ++k) avg += t.at(x.neighbor(k));
  return avg / (2.0 * t.d) - t.at(x);
}

std::string estimate_line(const std::string& what, const ProbabilityEstimate& e) {
  std::ostringstream s;
  s << what << ": " << e.successes << "/" << e.trials << " = " << fmt(e.p_hat) << ", 95% Wilson ["
    << fmt(e.ci.lo) << ", " << fmt(e.ci.hi) << "], bias bound " << fmt(e.bias_bound);
  return s.str();
}

// ---------------------------------------------------------------- experiments

void run_green(const ExperimentConfig& c, ExperimentOutput& out) {
  const int d = c.params["d"], radius = c.params["radius"];
  const std::int64_t horizon = c.params["horizon"].get<std::int64_t>();
  if (radius < 1) throw ConfigError({"radius: must be >= 1"});
  check_dimension(d);
  const GreenTable owned =
      horizon > 0 ? load_or_build_green_table(d, radius + 1, horizon) : GreenTable{};
  const GreenTable& t = horizon > 0 ? owned : green_table(d, radius + 1);
  out.results.header = csv_header("green");
  std::vector<Site> reps;
  orbit_reps(d, radius, reps);
  const double tol = t.tail_bound * (1.0 + 1.0 / (2 * d)) * 2.0;
  int bad = 0;
  for (const Site& x : reps) {
    double n2 = 0.0;
    for (int i = 0; i < d; ++i) n2 += static_cast<double>(x[i]) * x[i];
    const double g = t.at(x);
    const double defect = harmonic_defect(t, x) + (x == Site::origin(d) ? 1.0 : 0.0);
    if (!(g > 0.0) || std::abs(defect) > tol) ++bad;
    out.results.add({site_str(x), fmt(x.norm_inf()), fmt(std::sqrt(n2)), fmt(g), fmt(defect), fmt(t.tail_bound)});
  }
  if (bad) out.failed_checks.push_back("green: " + std::to_string(bad) + " sites violate positivity or Green's equation");
  out.summary.push_back("d = " + std::to_string(d) + ", table radius " + std::to_string(t.radius) + ", horizon " +
                        std::to_string(t.horizon) + ", tail bound " + fmt(t.tail_bound));
  out.summary.push_back("g(0) = " + fmt(t.origin()) + ", return probability 1 - 1/g(0) = " + fmt(1.0 - 1.0 / t.origin()));
}

void run_capacity(const ExperimentConfig& c, ExperimentOutput& out) {
  const int d = c.params["d"];
  check_dimension(d);
  std::vector<int> balls = int_list(c.params["ball"]);
  std::sort(balls.begin(), balls.end());
  if (balls.front() < 0) throw ConfigError({"ball: radii must be >= 0"});
  const GreenTable& t = green_table(d, 2 * balls.back());
  out.results.header = csv_header("capacity");
  if (c.params["point"].get<bool>()) {
    const double cap = capacity(SiteSet{Site::origin(d)}, t);
    out.results.add({"point", "0", "1", "1", fmt(cap), fmt(cap * t.origin()), ""});
  }
  double prev = 0.0;
  for (int r : balls) {
    const SiteSet k = SiteSet::box(LBox::ball(d, r));
    const EquilibriumMeasure eq = equilibrium_measure(k, t);
    const double e = energy(normalized_equilibrium(eq), t) * eq.total_mass;
    if (std::abs(e - 1.0) > 1e-8)
      out.failed_checks.push_back("capacity: energy * cap = " + fmt(e) + " for B(0," + std::to_string(r) + ")");
    if (eq.total_mass < prev) out.failed_checks.push_back("capacity: not monotone at R = " + std::to_string(r));
    prev = eq.total_mass;
    const std::string scaled = r > 0 ? fmt(eq.total_mass / std::pow(r, d - 2)) : "";
    out.results.add({"ball", fmt(r), fmt(k.size()), fmt(eq.support.size()), fmt(eq.total_mass), fmt(e), scaled});
  }
  out.summary.push_back("g(0) = " + fmt(t.origin()) + "; cap({x}) = 1/g(0) = " + fmt(1.0 / t.origin()));
  out.summary.push_back("largest ball B(0," + std::to_string(balls.back()) + "): cap = " + fmt(prev));
}

json graph_document(const InterlacementGraph& g) {
  json v = json::array(), e = json::array();
  for (const Site& x : g.vertices()) {
    json s = json::array();
    for (int i = 0; i < x.dim(); ++i) s.push_back(x[i]);
    v.push_back(s);
  }
  for (const auto& [i, j] : g.edges()) e.push_back({i, j});
  return {{"vertices", v}, {"edges", e}, {"components", g.component_count()}};
}

void run_sample(const ExperimentConfig& c, ExperimentOutput& out) {
  const int d = c.params["d"], radius = c.params["window-radius"], rho = c.params["rho"];
  const double u = c.params["u"];
  const int dump = c.params["dump-graph"];
  check_dimension(d);
  if (radius < 1) throw ConfigError({"window-radius: must be >= 1"});
  const LBox window = LBox::ball(d, radius);
  const GreenTable& t = green_table(d, 2 * radius);
  const EquilibriumMeasure eq = box_equilibrium_measure(window, t);
  const RngStream root(c.seed, experiment_stream("sample"));
  out.results.header = csv_header("sample");
  std::vector<double> counts;
  std::size_t origin_hits = 0;
  double site_bias = 0.0, bias = 0.0;
  for (int r = 0; r < c.replicas; ++r) {
    auto cfg = SamplerConfig::standard(u, window, root.substream(static_cast<std::uint64_t>(r)));
    if (rho > 0) {
      cfg.truncation_radius = rho;
      cfg.step_cap = 16 * static_cast<std::int64_t>(rho) * rho;
    }
    cfg.reentry = c.params["reentry"].get<bool>();
    const TrajectorySoup soup = sample_soup(cfg, eq);
    if (soup.count != soup.trajectories.size())
      out.failed_checks.push_back("sample: count differs from trajectories in replica " + std::to_string(r));
    for (const auto& tr : soup.trajectories)
      if (chebyshev_distance(tr.start, window.center) != radius || eq.weight(tr.start) <= 0.0) {
        out.failed_checks.push_back("sample: start off the equilibrium support in replica " + std::to_string(r));
        break;
      }
    const InterlacementGraph g = induced_graph(soup);
    const bool hit = g.has_vertex(Site::origin(d));
    origin_hits += hit;
    counts.push_back(static_cast<double>(soup.count));
    site_bias = soup.site_bias_bound(Site::origin(d), t.origin());
    bias = soup.bias_bound;
    if (r == dump) out.documents["graph"] = graph_document(g);
    out.results.add({fmt(r), fmt(soup.count), fmt(soup.reentries()), fmt(soup.truncated), fmt(g.vertex_count()),
                     fmt(g.edge_count()), fmt(g.component_count()), fmt(g.largest_component()), fmt(hit)});
  }
  const double lambda = u * eq.total_mass;
  const double n = static_cast<double>(c.replicas);
  out.summary.push_back("window B(0," + std::to_string(radius) + "), cap = " + fmt(eq.total_mass) + ", u = " + fmt(u));
  out.summary.push_back("mean N = " + fmt(stats::mean(counts)) + " vs u cap = " + fmt(lambda) + " (sigma of mean " +
                        fmt(std::sqrt(lambda / n)) + ")");
  const auto est = ProbabilityEstimate::from_counts(origin_hits, static_cast<std::size_t>(c.replicas), site_bias);
  out.summary.push_back(estimate_line("P[0 in I]", est) + "; exact 1 - exp(-u/g(0)) = " +
                        fmt(1.0 - std::exp(-u / t.origin())));
  out.summary.push_back("per-trajectory return bound " + fmt(bias));
}

void run_trajcap(const ExperimentConfig& c, ExperimentOutput& out) {
  const int d = c.params["d"];
  check_dimension(d);
  const std::vector<int> ns = int_list(c.params["N"]), ts = int_list(c.params["T"]);
  std::vector<ScalingPoint> grid;
  for (int t : ts)
    for (int n : ns) {
      if (n < 1 || t < 1) throw ConfigError({"N, T: entries must be >= 1"});
      grid.push_back({n, t});
    }
  const int t_max = *std::max_element(ts.begin(), ts.end());
  const GreenTable& table = green_table(d, d == 3 ? 96 : static_cast<int>(4 * std::sqrt(t_max)) + 4);
  const RngStream root(c.seed, experiment_stream("trajcap"));
  const auto reports = capacity_scaling_experiment(grid, d, c.replicas, root.substream(0), table, c.params["eps"]);
  out.results.header = csv_header("trajcap");
  Table agg;
  agg.header = csv_header("trajcap_aggregate");
  for (const auto& rep : reports) {
    const double upper = static_cast<double>(rep.n) * static_cast<double>(rep.t) / table.origin();
    for (std::size_t k = 0; k < rep.caps.size(); ++k)
      out.results.add({fmt(rep.n), fmt(rep.t), fmt(k), fmt(rep.caps[k]), fmt(upper), fmt(rep.caps[k] <= upper * (1 + 1e-12))});
    agg.add({fmt(rep.n), fmt(rep.t), fmt(rep.replicas), fmt(rep.dropped), fmt(rep.mean_cap), fmt(rep.std_cap),
             fmt(rep.predicted), fmt(rep.fitted_c), fmt(rep.lower_quantile), fmt(rep.upper_bound_violations),
             fmt(rep.flagged)});
    if (rep.upper_bound_violations)
      out.failed_checks.push_back("trajcap: cap(Phi) > NT/g(0) on " + std::to_string(rep.upper_bound_violations) +
                                  " replicas at N=" + std::to_string(rep.n) + ", T=" + std::to_string(rep.t));
    if (rep.flagged)
      out.summary.push_back("warning: N=" + std::to_string(rep.n) + ", T=" + std::to_string(rep.t) + " dropped " +
                            std::to_string(rep.dropped) + " replicas (> 1%)");
  }
  out.extra["aggregate"] = std::move(agg);
  for (int n : ns) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& rep : reports)
      if (rep.n == n) {
        lo = std::min(lo, rep.fitted_c);
        hi = std::max(hi, rep.fitted_c);
      }
    out.summary.push_back("N = " + std::to_string(n) + ": fitted_c in [" + fmt(lo) + ", " + fmt(hi) + "], ratio " +
                          fmt(hi / lo));
  }

  const int chain_reps = c.params["chain-replicas"];
  if (chain_reps > 0) {
    const int s = c.params["chain-s"], t = c.params["chain-T"];
    const double u = c.params["chain-u"];
    const int bound = static_cast<int>(std::floor(s * std::pow(static_cast<double>(t), 0.75)));
    Table chain;
    chain.header = csv_header("trajcap_chain");
    int connected = 0, contained = 0;
    for (int r = 0; r < chain_reps; ++r) {
      const UChain ch = u_chain(Site::origin(d), t, s, u, root.substream(1).substream(static_cast<std::uint64_t>(r)), table);
      int far = 0;
      for (const Site& x : ch.all) far = std::max(far, x.norm_inf());
      connected += ch.connected;
      contained += far <= bound;
      chain.add({fmt(r), fmt(ch.all.size()), fmt(far), fmt(ch.connected), fmt(far <= bound)});
    }
    out.extra["chain"] = std::move(chain);
    if (connected != chain_reps)
      out.failed_checks.push_back("trajcap: u-chain union disconnected on " + std::to_string(chain_reps - connected) +
                                  " replicas");
    out.summary.push_back("u-chain s = " + std::to_string(s) + ", T = " + std::to_string(t) + ": connected " +
                          std::to_string(connected) + "/" + std::to_string(chain_reps) + ", inside B(x, " +
                          std::to_string(bound) + ") " + std::to_string(contained) + "/" + std::to_string(chain_reps));
  }
}

void run_connectivity(const ExperimentConfig& c, ExperimentOutput& out) {
  const int d = c.params["d"], rho_mult = c.params["rho-multiplier"];
  const double u = c.params["u"], c_mult = c.params["c-mult"];
  const std::string event = c.params["event"];
  check_dimension(d);
  if (event != "local_uniqueness" && event != "two_point")
    throw ConfigError({"event: expected local_uniqueness or two_point, got '" + event + "'"});
  const std::vector<int> radii = int_list(c.params["R-grid"]);
  const RngStream root(c.seed, experiment_stream("connectivity"));
  out.results.header = csv_header("connectivity");
  std::vector<LocalUniquenessReport> lu;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const int r = radii[k];
    if (event == "local_uniqueness") {
      const auto rep = local_uniqueness_experiment(r, u, d, c.replicas, root.substream(k), green_table(d, 4 * r), rho_mult);
      const auto& e = rep.estimate;
      out.results.add({event, fmt(r), fmt(u), fmt(c.replicas), fmt(e.successes), fmt(e.p_hat), fmt(e.ci.lo), fmt(e.ci.hi),
                       fmt(e.bias_bound), fmt(rep.empty)});
      out.summary.push_back(estimate_line("R = " + std::to_string(r) + " local uniqueness", e));
      lu.push_back(rep);
    } else {
      Site x(d);
      x[0] = r;
      const int outer = detail::scaled_radius(r, c_mult);
      const auto reps = two_point_experiment(x, -x, r, {u}, c_mult, c.replicas, root.substream(k),
                                             green_table(d, 2 * outer), rho_mult);
      const auto& e = reps[0].failure;
      out.results.add({event, fmt(r), fmt(u), fmt(c.replicas), fmt(e.successes), fmt(e.p_hat), fmt(e.ci.lo), fmt(e.ci.hi),
                       fmt(e.bias_bound), fmt(reps[0].both_present.successes)});
      out.summary.push_back(estimate_line("R = " + std::to_string(r) + " two-point failure", e));
    }
  }
  if (lu.size() >= 2) {
    bool trend = true;
    for (std::size_t k = 1; k < lu.size(); ++k)
      trend = trend && (lu[k].estimate.p_hat >= lu[k - 1].estimate.p_hat ||
                        lu[k].estimate.ci.overlaps(lu[k - 1].estimate.ci));
    out.summary.push_back(std::string("trend p(R) nondecreasing within CI overlap: ") + (trend ? "yes" : "no"));
    out.summary.push_back("slope of -log(1 - p) against R^(1/6): " + fmt(uniqueness_rate_slope(lu)));
  }
}

void run_flow(const ExperimentConfig& c, ExperimentOutput& out) {
  const std::vector<int> radii = int_list(c.params["R-grid"]);
  const RngStream root(c.seed, experiment_stream("flow"));
  const FlowProfile p = flow_profile(c.params["d"], c.params["u"], c.params["eps"], c.params["directions"], radii,
                                     c.params["start-radius"], c.params["rho-multiplier"], c.replicas, root);
  out.results.header = csv_header("flow");
  for (std::size_t r = 0; r < p.energies.size(); ++r)
    for (std::size_t k = 0; k < p.radii.size(); ++k) {
      const double inc = p.energies[r][k] - (k ? p.energies[r][k - 1] : 0.0);
      out.results.add({fmt(r), fmt(p.radii[k]), fmt(p.successes[r]), fmt(p.failures[r]), fmt(p.energies[r][k]), fmt(inc)});
    }
  if (p.antisymmetry_failures)
    out.failed_checks.push_back("flow: antisymmetry failed on " + std::to_string(p.antisymmetry_failures) + " instances");
  if (p.source_identity_failures)
    out.failed_checks.push_back("flow: source identity failed on " + std::to_string(p.source_identity_failures) +
                                " instances");
  const auto inc = p.mean_increments();
  std::vector<std::string> parts;
  bool decreasing = true;
  for (std::size_t k = 0; k < inc.size(); ++k) {
    parts.push_back(fmt(inc[k]));
    if (k) decreasing = decreasing && inc[k] < inc[k - 1];
  }
  const int ok = std::accumulate(p.successes.begin(), p.successes.end(), 0);
  const int bad = std::accumulate(p.failures.begin(), p.failures.end(), 0);
  out.summary.push_back("directions with a path: " + std::to_string(ok) + ", without: " + std::to_string(bad));
  out.summary.push_back("mean energy increments over the R grid: " + join(parts, ", "));
  out.summary.push_back(std::string("strictly decreasing: ") + (decreasing ? "yes" : "no"));
  out.summary.push_back("event bias bound " + fmt(p.bias_bound));
}

void run_resistance(const ExperimentConfig& c, ExperimentOutput& out) {
  const std::vector<int> radii = int_list(c.params["R-grid"]);
  const RngStream root(c.seed, experiment_stream("resistance"));
  const ResistanceProfile p =
      resistance_profile(c.params["d"], c.params["u"], radii, c.params["rho-multiplier"], c.replicas, root);
  out.results.header = csv_header("resistance");
  for (std::size_t r = 0; r < p.values.size(); ++r)
    for (std::size_t k = 0; k < p.radii.size(); ++k)
      out.results.add({fmt(r), fmt(p.radii[k]), fmt(p.values[r][k]), fmt(std::isfinite(p.values[r][k])),
                       fmt(p.component_sizes[r][k]), fmt(p.iterations[r][k])});
  if (p.unconverged)
    out.failed_checks.push_back("resistance: solver did not converge on " + std::to_string(p.unconverged) + " instances");
  const auto med = p.medians();
  std::vector<std::string> parts;
  for (std::size_t k = 0; k < med.size(); ++k) parts.push_back("R=" + std::to_string(p.radii[k]) + ": " + fmt(med[k]));
  out.summary.push_back("median R_eff given 0 in I: " + join(parts, ", "));
  bool decreasing = true;
  for (std::size_t k = 2; k < med.size(); ++k) decreasing = decreasing && med[k] - med[k - 1] < med[k - 1] - med[k - 2];
  out.summary.push_back(std::string("increments decreasing: ") + (decreasing ? "yes" : "no"));
  out.summary.push_back("rejected samples (0 not in I): " + std::to_string(p.rejected) + ", event bias bound " +
                        fmt(p.bias_bound));
}

void run_into(const ExperimentConfig& c, ExperimentOutput& out) {
  const std::string& e = c.experiment;
  if (e == "green") return run_green(c, out);
  if (e == "capacity") return run_capacity(c, out);
  if (e == "sample") return run_sample(c, out);
  if (e == "trajcap") return run_trajcap(c, out);
  if (e == "connectivity") return run_connectivity(c, out);
  if (e == "flow") return run_flow(c, out);
  if (e == "resistance") return run_resistance(c, out);
  throw ConfigError({"experiment '" + e + "' cannot be run directly"});
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

int run_single(const ExperimentConfig& config, std::ostream& log, std::string& status) {
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  fs::remove(config.output_dir / "FAILED");
  write_text(config.output_dir / "manifest.json", manifest(config).dump(2) + "\n");
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentOutput out;
  std::string error;
  try {
    run_into(config, out);
  } catch (const std::exception& ex) {
    error = ex.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out.results.header.empty()) out.results.header = csv_header(config.experiment);
  write_text(config.output_dir / "results.csv", to_csv(out.results));
  for (const auto& [stem, table] : out.extra) write_text(config.output_dir / (stem + ".csv"), to_csv(table));
  for (const auto& [stem, doc] : out.documents) write_text(config.output_dir / (stem + ".json"), doc.dump() + "\n");
  std::ostringstream summary;
  summary << "experiment: " << config.experiment << "\nseed: " << config.seed << "\nreplicas: " << config.replicas
          << "\n";
  for (const auto& line : out.summary) summary << line << "\n";
  for (const auto& f : out.failed_checks) summary << "FAILED CHECK: " << f << "\n";
  if (!error.empty()) summary << "ERROR: " << error << "\n";
  summary << "runtime: " << std::fixed << std::setprecision(1) << secs << " s\n";
  write_text(config.output_dir / "summary.txt", summary.str());
  log << summary.str();
  if (error.empty() && out.failed_checks.empty()) {
    status = "ok";
    return 0;
  }
  std::string marker = error.empty() ? "" : "error: " + error + "\n";
  for (const auto& f : out.failed_checks) marker += "failed check: " + f + "\n";
  write_text(config.output_dir / "FAILED", marker);
  status = error.empty() ? "failed_checks" : "error";
  return 1;
}

}  // namespace

// ---------------------------------------------------------------- public API

ConfigError::ConfigError(std::vector<std::string> p)
    : std::invalid_argument("invalid configuration: " + join(p, "; ")), problems(std::move(p)) {}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"green", "capacity",   "sample", "trajcap",
                                              "connectivity", "flow", "resistance", "all"};
  return names;
}

json default_params(const std::string& experiment, const std::string& profile) {
  json p = base_params(experiment);
  if (profile == "quick")
    merge_into(p, quick_patch(experiment));
  else if (profile == "desk")
    merge_into(p, desk_patch(experiment));
  else if (!profile.empty())
    throw ConfigError({"profile: expected quick or desk, got '" + profile + "'"});
  return p;
}

int default_replicas(const std::string& e, const std::string& profile) {
  const bool quick = profile == "quick", desk = profile == "desk";
  if (e == "sample") return quick ? 50 : desk ? 10000 : 1000;
  if (e == "trajcap") return quick ? 100 : 1000;
  if (e == "connectivity") return quick ? 20 : 200;
  if (e == "flow") return quick ? 1 : desk ? 8 : 4;
  if (e == "resistance") return quick ? 5 : 50;
  return 0;
}

ExperimentConfig resolve_config(const std::string& experiment, const std::string& profile,
                                const json& file_params, const json& flag_params, std::uint64_t seed,
                                int replicas, const std::filesystem::path& output_dir) {
  std::vector<std::string> problems;
  json params;
  try {
    params = default_params(experiment, profile);
  } catch (const ConfigError& e) {
    throw;
  }
  for (const json* src : {&file_params, &flag_params}) {
    if (src->is_null()) continue;
    if (!src->is_object()) {
      problems.push_back("parameters must be a JSON object");
      continue;
    }
    for (const auto& [k, v] : src->items()) {
      if (!params.contains(k)) {
        std::vector<std::string> keys;
        for (const auto& [name, _] : params.items()) keys.push_back(name);
        problems.push_back("unknown key '" + k + "' for experiment " + experiment +
                           (keys.empty() ? " (takes no parameters)" : " (valid: " + join(keys, ", ") + ")"));
        continue;
      }
      if (!same_kind(params[k], v)) {
        // A single integer is accepted where a list is expected.
        if (params[k].is_array() && v.is_number_integer()) {
          params[k] = json::array({v});
          continue;
        }
        problems.push_back("key '" + k + "' must be " + kind_name(params[k]) + ", got " + v.dump());
        continue;
      }
      params[k] = v;
    }
  }
  if (replicas < 0) problems.push_back("replicas: must be >= 0");
  if (!problems.empty()) throw ConfigError(problems);
  ExperimentConfig c;
  c.experiment = experiment;
  c.profile = profile;
  c.params = params;
  c.seed = seed;
  c.replicas = replicas > 0 ? replicas : default_replicas(experiment, profile);
  c.output_dir = output_dir;
  return c;
}

json parse_flag_value(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  auto as_int = [](const std::string& s) -> std::optional<std::int64_t> {
    std::int64_t v = 0;
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec == std::errc() && p == end) return v;
    return std::nullopt;
  };
  if (auto v = as_int(text)) return *v;
  if (text.find(',') != std::string::npos) {
    json arr = json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto v = as_int(item);
      if (!v) return text;
      arr.push_back(*v);
    }
    return arr;
  }
  try {
    std::size_t pos = 0;
    const double d = std::stod(text, &pos);
    if (pos == text.size()) return d;
  } catch (const std::exception&) {
  }
  return text;
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != header.size()) throw std::logic_error("Table::add: row width differs from header");
  rows.push_back(std::move(row));
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&out](const std::vector<std::string>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + csv_field(v[i]);
    out += "\r\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(std::int64_t v) { return std::to_string(v); }

const std::vector<std::string>& csv_header(const std::string& name) {
  static const std::map<std::string, std::vector<std::string>> headers{
      {"green", {"site", "norm_inf", "norm2", "g", "harmonic_defect", "tail_bound"}},
      {"capacity", {"shape", "radius", "sites", "support", "capacity", "energy_times_capacity", "capacity_over_r_d2"}},
      {"sample",
       {"replica", "count", "reentries", "truncated", "vertices", "edges", "components", "largest_component",
        "origin_in_I"}},
      {"trajcap", {"n", "t", "sample", "capacity", "upper_bound", "within_bound"}},
      {"trajcap_aggregate",
       {"n", "t", "replicas", "dropped", "mean_cap", "std_cap", "predicted", "fitted_c", "lower_quantile",
        "upper_bound_violations", "flagged"}},
      {"trajcap_chain", {"replica", "sites", "max_norm_inf", "connected", "contained"}},
      {"connectivity",
       {"event", "R", "u", "replicas", "successes", "p_hat", "ci_lo", "ci_hi", "bias_bound", "auxiliary_count"}},
      {"flow", {"replica", "R", "successes", "failures", "energy_within", "increment"}},
      {"resistance", {"replica", "R", "resistance", "connected", "component_size", "iterations"}},
      {"all", {"experiment", "status", "failed_checks"}},
  };
  auto it = headers.find(name);
  if (it == headers.end()) throw std::invalid_argument("csv_header: unknown table " + name);
  return it->second;
}

const GreenTable& green_table(int d, int radius) {
  static std::map<std::pair<int, int>, std::unique_ptr<GreenTable>> cache;
  check_dimension(d);
  if (d == 3 && radius <= 96) radius = 96;
  for (auto& [key, t] : cache)
    if (key.first == d && key.second >= radius) return *t;
  auto t = std::make_unique<GreenTable>(load_or_build_green_table(d, radius));
  return *(cache[{d, radius}] = std::move(t));
}

std::vector<double> FlowProfile::mean_increments() const {
  // Replicas where every direction failed carry NaN energies and are skipped.
  std::vector<double> out(radii.size(), 0.0);
  std::size_t used = 0;
  for (const auto& e : energies) {
    if (!std::isfinite(e.back())) continue;
    ++used;
    for (std::size_t k = 0; k < radii.size(); ++k) out[k] += e[k] - (k ? e[k - 1] : 0.0);
  }
  for (double& v : out) v = used ? v / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

FlowProfile flow_profile(int d, double u, double eps, int directions, const std::vector<int>& radii, int start_radius,
                         int rho_multiplier, int replicas, const RngStream& rng) {
  check_dimension(d);
  if (radii.empty() || directions < 1) throw ConfigError({"flow: need radii and at least one direction"});
  FlowProfile p;
  p.radii = radii;
  std::sort(p.radii.begin(), p.radii.end());
  const int r_max = p.radii.back();
  const LBox window = LBox::ball(d, r_max);
  const EquilibriumMeasure eq = box_equilibrium_measure(window, green_table(d, 2 * r_max));
  for (int r = 0; r < replicas; ++r) {
    const RngStream stream = rng.substream(static_cast<std::uint64_t>(r));
    const TrajectorySoup soup = sample_soup(SamplerConfig::standard(u, window, stream.substream(0), rho_multiplier), eq);
    p.bias_bound = soup.event_bias_bound();
    const auto graph = std::make_shared<const InterlacementGraph>(induced_graph(soup));
    RngStream dir_rng = stream.substream(1);
    std::vector<Paraboloid> dirs;
    for (int k = 0; k < directions; ++k) dirs.emplace_back(random_direction(d, dir_rng), eps);
    std::vector<double> energies(p.radii.size(), 0.0);
    try {
      const AveragedFlow avg = averaged_flow(graph, dirs, LBox::ball(d, start_radius), r_max);
      p.successes.push_back(avg.successes);
      p.failures.push_back(avg.failures);
      for (const auto& [i, j] : graph->edges()) {
        const Site &x = graph->vertices()[i], &y = graph->vertices()[j];
        if (avg.flow(x, y) != -avg.flow(y, x)) ++p.antisymmetry_failures;
      }
      // Per-direction identity: sum_y u_v(x, y) = 1[x = start] - 1[x = end].
      for (const LatticePath& path : avg.paths) {
        const Flow f = path_flow(graph, path);
        const auto div = f.divergence();
        bool ok = true;
        std::vector<char> on_path(graph->vertex_count(), 0);
        for (const Site& x : path.vertices) on_path[*graph->index_of(x)] = 1;
        for (std::uint32_t v = 0; v < graph->vertex_count() && ok; ++v) {
          const Site& x = graph->vertices()[v];
          const double want = x == path.vertices.front() ? 1.0 : x == path.vertices.back() ? -1.0 : 0.0;
          ok = div[v] == want && (on_path[v] || div[v] == 0.0);
        }
        if (!ok) ++p.source_identity_failures;
      }
      for (std::size_t k = 0; k < p.radii.size(); ++k)
        energies[k] = flow_energy_within(avg.flow, LBox::ball(d, p.radii[k]));
    } catch (const std::runtime_error&) {
      p.successes.push_back(0);
      p.failures.push_back(directions);
      std::fill(energies.begin(), energies.end(), std::numeric_limits<double>::quiet_NaN());
    }
    p.energies.push_back(energies);
  }
  return p;
}

std::vector<double> ResistanceProfile::medians() const {
  std::vector<double> out;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    std::vector<double> col;
    for (const auto& v : values) col.push_back(v[k]);
    out.push_back(col.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::median(col));
  }
  return out;
}

ResistanceProfile resistance_profile(int d, double u, const std::vector<int>& radii, int rho_multiplier, int replicas,
                                     const RngStream& rng) {
  check_dimension(d);
  if (radii.empty()) throw ConfigError({"resistance: empty R grid"});
  ResistanceProfile p;
  p.radii = radii;
  std::sort(p.radii.begin(), p.radii.end());
  const int r_max = p.radii.back();
  const LBox window = LBox::ball(d, r_max);
  const EquilibriumMeasure eq = box_equilibrium_measure(window, green_table(d, 2 * r_max));
  const Site origin = Site::origin(d);
  std::uint64_t attempt = 0;
  while (static_cast<int>(p.values.size()) < replicas) {
    const TrajectorySoup soup =
        sample_soup(SamplerConfig::standard(u, window, rng.substream(attempt++), rho_multiplier), eq);
    p.bias_bound = soup.event_bias_bound();
    const InterlacementGraph g = induced_graph(soup);
    if (!g.has_vertex(origin)) {
      ++p.rejected;
      if (attempt >= 1000 && p.values.size() * 1000 < attempt)
        throw RejectionRateError("resistance: acceptance rate of {0 in I} below 1e-3; use a larger u");
      continue;
    }
    std::vector<double> vals;
    std::vector<int> iters;
    std::vector<std::size_t> sizes;
    for (int r : p.radii) {
      const LBox box = LBox::ball(d, r);
      const InterlacementGraph sub = r == r_max ? g : g.restricted_to(box);
      const ResistanceResult res = effective_resistance(sub, origin, box_boundary_vertices(sub, box));
      if (!res.converged) ++p.unconverged;
      vals.push_back(res.value);
      iters.push_back(res.iterations);
      sizes.push_back(res.component_size);
    }
    p.values.push_back(vals);
    p.iterations.push_back(iters);
    p.component_sizes.push_back(sizes);
  }
  return p;
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  ExperimentOutput out;
  run_into(config, out);
  return out;
}

json manifest(const ExperimentConfig& c) {
  return {{"experiment", c.experiment},
          {"params", c.params},
          {"seed", c.seed},
          {"replicas", c.replicas},
          {"profile", c.profile},
          {"rng", "philox4x32-10"},
          {"stream", experiment_stream(c.experiment)},
          {"version", INTERLACE_VERSION}};
}

int run(const ExperimentConfig& config, std::ostream& log) {
  namespace fs = std::filesystem;
  std::string status;
  if (config.experiment != "all") return run_single(config, log, status);

  fs::create_directories(config.output_dir);
  fs::remove(config.output_dir / "FAILED");
  Table overview;
  overview.header = csv_header("all");
  json subs = json::array();
  int code = 0;
  std::string failed;
  for (const std::string& name : experiment_names()) {
    if (name == "all") continue;
    ExperimentConfig sub = resolve_config(name, config.profile, json(), json(), config.seed,
                                          default_replicas(name, config.profile), config.output_dir / name);
    subs.push_back(manifest(sub));
    log << "== " << name << "\n";
    const int rc = run_single(sub, log, status);
    std::string checks;
    if (rc) {
      std::ifstream f(sub.output_dir / "FAILED");
      std::stringstream ss;
      ss << f.rdbuf();
      checks = ss.str();
      while (!checks.empty() && checks.back() == '\n') checks.pop_back();
      failed += name + ": " + checks + "\n";
    }
    overview.add({name, status, checks});
    code = std::max(code, rc);
  }
  json m = manifest(config);
  m["experiments"] = subs;
  write_text(config.output_dir / "manifest.json", m.dump(2) + "\n");
  write_text(config.output_dir / "results.csv", to_csv(overview));
  std::string summary;
  for (const auto& r : overview.rows) summary += r[0] + ": " + r[1] + "\n";
  write_text(config.output_dir / "summary.txt", summary);
  if (code) write_text(config.output_dir / "FAILED", failed);
  return code;
}

}  // namespace interlace::runner
