// interlace: command-line front end for the random interlacement experiments.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "runner.hpp"

namespace ir = interlace::runner;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 1;
  int replicas = 0;
  std::string out;
  std::string config;
  std::string profile;
  std::string experiment;
};

// Leftover "--key value" pairs; a key with no value is a true flag.
json extras_to_json(const std::vector<std::string>& extras, std::vector<std::string>& problems) {
  json out = json::object();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() < 3) {
      problems.push_back("unexpected argument '" + tok + "'");
      continue;
    }
    std::string key = tok.substr(2), value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else if (i + 1 < extras.size() && extras[i + 1].rfind("--", 0) != 0) {
      value = extras[++i];
    } else {
      value = "true";
    }
    if (out.contains(key)) problems.push_back("key '" + key + "' given twice");
    out[key] = ir::parse_flag_value(value);
  }
  return out;
}

int execute(const std::string& experiment, const Common& c, const std::vector<std::string>& extras) {
  std::vector<std::string> problems;
  const json flags = extras_to_json(extras, problems);
  json file_params;
  std::string profile = c.profile;
  std::uint64_t seed = c.seed;
  int replicas = c.replicas;
  if (!c.config.empty()) {
    std::ifstream f(c.config);
    if (!f) throw ir::ConfigError({"cannot read config file " + c.config});
    json file;
    try {
      file = json::parse(f);
    } catch (const json::exception& e) {
      throw ir::ConfigError({"config file " + c.config + ": " + e.what()});
    }
    if (!file.is_object()) throw ir::ConfigError({"config file must hold a JSON object"});
    for (const auto& [k, v] : file.items()) {
      if (k == "params") file_params = v;
      else if (k == "seed" && v.is_number_unsigned()) { if (seed == 1) seed = v; }
      else if (k == "replicas" && v.is_number_integer()) { if (replicas == 0) replicas = v; }
      else if (k == "profile" && v.is_string()) { if (profile.empty()) profile = v; }
      else if (k == "experiment" && v.is_string()) {
        if (v != experiment) problems.push_back("config file is for experiment '" + v.get<std::string>() + "'");
      } else problems.push_back("config file: unknown or mistyped key '" + k + "'");
    }
  }
  if (!problems.empty()) throw ir::ConfigError(problems);
  const std::string out = c.out.empty() ? "out/" + experiment : c.out;
  const ir::ExperimentConfig cfg = ir::resolve_config(experiment, profile, file_params, flags, seed, replicas, out);
  return ir::run(cfg, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random interlacement experiments on Z^d"};
  app.set_version_flag("--version", INTERLACE_VERSION);
  app.require_subcommand(1);
  Common common;
  std::vector<std::pair<CLI::App*, std::string>> subs;

  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Root seed");
    sub->add_option("--replicas", common.replicas, "Replica count (0: profile default)");
    sub->add_option("--out", common.out, "Output directory (default out/<experiment>)");
    sub->add_option("--config", common.config, "JSON config file");
    sub->add_option("--profile", common.profile, "Parameter profile")->check(CLI::IsMember({"quick", "desk"}));
    sub->allow_extras();
  };
  for (const std::string& name : ir::experiment_names()) {
    if (name == "all") continue;
    CLI::App* sub = app.add_subcommand(name, "Run the " + name + " experiment; extra --key value pairs set parameters");
    add_common(sub);
    subs.emplace_back(sub, name);
  }
  CLI::App* run = app.add_subcommand("run", "Run an experiment by name (including 'all')");
  add_common(run);
  run->add_option("--experiment", common.experiment, "Experiment name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return execute(common.experiment, common, run->remaining());
    for (auto& [sub, name] : subs)
      if (sub->parsed()) return execute(name, common, sub->remaining());
  } catch (const ir::ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& p : e.problems) std::cerr << "  " << p << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
