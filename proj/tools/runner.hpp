#pragma once

// Experiment orchestration for the interlace CLI: config resolution,
// experiment drivers, and the CSV / JSON artifacts they write.

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "interlace/interlace.hpp"

namespace interlace::runner {

using nlohmann::json;

/// Invalid configuration; `problems` lists every offending key at once.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  std::vector<std::string> problems;
};

struct ExperimentConfig {
  std::string experiment;
  /// Fully resolved parameters (defaults, then profile, then file, then flags).
  json params = json::object();
  std::uint64_t seed = 1;
  int replicas = 0;
  std::string profile;
  std::filesystem::path output_dir = "out";
};

/// green, capacity, sample, trajcap, connectivity, flow, resistance, all.
const std::vector<std::string>& experiment_names();

/// Default parameters (and replica count) of an experiment under a profile
/// ("", "quick" or "desk").
json default_params(const std::string& experiment, const std::string& profile);
int default_replicas(const std::string& experiment, const std::string& profile);

/// Merge file and flag parameters over the defaults; flags win. Unknown
/// keys and type mismatches are collected and thrown together.
ExperimentConfig resolve_config(const std::string& experiment, const std::string& profile,
                                const json& file_params, const json& flag_params,
                                std::uint64_t seed, int replicas,
                                const std::filesystem::path& output_dir);

/// "--key value" style flag pairs to JSON: "4,8" becomes [4, 8], numbers
/// become numbers, true/false become booleans.
json parse_flag_value(const std::string& text);

// ---------------------------------------------------------------- CSV

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  void add(std::vector<std::string> row);
};

/// RFC 4180: CRLF line ends; fields with ',', '"', CR or LF are quoted and
/// inner quotes doubled.
std::string csv_field(const std::string& s);
std::string to_csv(const Table& t);

/// Shortest round-trip decimal of a double ("inf", "-inf", "nan" for the rest).
std::string fmt(double v);
std::string fmt(std::int64_t v);
inline std::string fmt(int v) { return fmt(static_cast<std::int64_t>(v)); }
inline std::string fmt(std::size_t v) { return fmt(static_cast<std::int64_t>(v)); }
inline std::string fmt(bool v) { return v ? "true" : "false"; }

/// Column names of results.csv per experiment (and of the extra tables).
const std::vector<std::string>& csv_header(const std::string& table_name);

// ---------------------------------------------------------------- Green tables

/// Table for dimension d covering |x|_inf <= radius, from the cache when
/// INTERLACE_CACHE_DIR is set (d = 3 always uses one radius-96 table).
const GreenTable& green_table(int d, int radius);

// ---------------------------------------------------------------- shared drivers

/// Energy of the averaged direction flow inside B(R), per replica.
struct FlowProfile {
  std::vector<int> radii;
  /// energies[r][k]: replica r, radius radii[k].
  std::vector<std::vector<double>> energies;
  std::vector<int> successes, failures;
  /// Instances where antisymmetry or a per-direction source identity failed.
  int antisymmetry_failures = 0;
  int source_identity_failures = 0;
  double bias_bound = 0.0;
  /// Mean over replicas of energy in B(radii[0]) and of each dyadic shell.
  std::vector<double> mean_increments() const;
};

FlowProfile flow_profile(int d, double u, double eps, int directions, const std::vector<int>& radii,
                         int start_radius, int rho_multiplier, int replicas, const RngStream& rng);

/// R_eff(0 -> I ∩ ∂B(R)) within I ∩ B(R), given 0 in I (rejection).
struct ResistanceProfile {
  std::vector<int> radii;
  /// values[r][k]; +inf when 0 is cut off from ∂B(R).
  std::vector<std::vector<double>> values;
  std::vector<std::vector<int>> iterations;
  std::vector<std::vector<std::size_t>> component_sizes;
  int rejected = 0;
  int unconverged = 0;
  double bias_bound = 0.0;
  std::vector<double> medians() const;
};

ResistanceProfile resistance_profile(int d, double u, const std::vector<int>& radii, int rho_multiplier,
                                     int replicas, const RngStream& rng);

// ---------------------------------------------------------------- running

struct ExperimentOutput {
  Table results;
  /// Further CSV files by stem (e.g. "aggregate").
  std::map<std::string, Table> extra;
  std::vector<std::string> summary;
  /// Failed invariant assertions; any entry makes the run fail.
  std::vector<std::string> failed_checks;
  /// Optional JSON artifacts by stem.
  std::map<std::string, json> documents;
};

ExperimentOutput run_experiment(const ExperimentConfig& config);

json manifest(const ExperimentConfig& config);

/// Run and write manifest.json, results.csv, summary.txt (+ extras) into
/// output_dir. Returns 0 on success; on error or failed checks writes a
/// FAILED marker, keeps partial artifacts and returns 1.
int run(const ExperimentConfig& config, std::ostream& log);

}  // namespace interlace::runner
