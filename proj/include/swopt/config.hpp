#ifndef SWOPT_CONFIG_HPP
#define SWOPT_CONFIG_HPP

// Run configuration and its YAML form.  The schema is documented in
// README.md; every error names the offending key path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <yaml-cpp/yaml.h>

#include "swopt/errors.hpp"
#include "swopt/optimizer.hpp"
#include "swopt/scenario.hpp"

namespace swopt {

enum class Command { optimize, compare, grid, lawrie, oracle_check };

inline const char* command_name(Command c) {
  switch (c) {
    case Command::optimize: return "optimize";
    case Command::compare: return "compare";
    case Command::grid: return "grid";
    case Command::lawrie: return "lawrie";
    case Command::oracle_check: return "oracle-check";
  }
  return "?";
}

inline Command parse_command(const std::string& name) {
  for (Command c : {Command::optimize, Command::compare, Command::grid,
                    Command::lawrie, Command::oracle_check}) {
    if (name == command_name(c)) return c;
  }
  throw ConfigError("command: unknown command '" + name +
                    "' (expected optimize, compare, grid, lawrie or oracle-check)");
}

enum class OutputFormat { csv, tsv };

inline OutputFormat parse_format(const std::string& name) {
  if (name == "csv") return OutputFormat::csv;
  if (name == "tsv") return OutputFormat::tsv;
  throw ConfigError("output.format: expected csv or tsv, got '" + name + "'");
}

struct SamplerSettings {
  std::size_t samples = 500;
  std::uint64_t seed = 1;
};

struct OutputSettings {
  std::filesystem::path directory = ".";
  OutputFormat format = OutputFormat::csv;
  std::string prefix;  // empty selects the command name

  char delimiter() const { return format == OutputFormat::csv ? ',' : '\t'; }
  const char* extension() const { return format == OutputFormat::csv ? ".csv" : ".tsv"; }
};

// Design evaluated by compare instead of the optimum.
struct FixedDesign {
  std::string kind;  // "balanced", "lawrie" or "weights"
  Eigen::VectorXd weights;
};

struct GridSettings {
  std::string name = "grid";
  GridAxes axes;
  HypotheticalSettings settings;
};

struct RunConfig {
  Command command = Command::optimize;
  std::optional<ScenarioSpec> scenario;
  std::optional<GridSettings> grid;
  std::optional<FixedDesign> design;
  SamplerSettings sampler;
  OptimizeOptions optimizer;
  int oracle_resolution = 40;
  OutputSettings output;

  std::string output_prefix() const {
    return output.prefix.empty() ? command_name(command) : output.prefix;
  }

  void validate() const {
    if (sampler.samples < 1) throw ConfigError("sampler.samples must be at least 1");
    if (optimizer.restarts < 1) throw ConfigError("optimizer.restarts must be at least 1");
    if (optimizer.max_iterations < 1) {
      throw ConfigError("optimizer.max_iterations must be at least 1");
    }
    if (!(optimizer.tolerance > 0.0)) throw ConfigError("optimizer.tolerance must be positive");
    if (optimizer.threads < 1) throw ConfigError("optimizer.threads must be at least 1");
    if (oracle_resolution < 1) throw ConfigError("oracle.resolution must be at least 1");
    if (command == Command::grid) {
      if (!grid) throw ConfigError("grid: section required by the grid command");
    } else if (!scenario) {
      throw ConfigError(std::string("scenario: section required by the ") +
                        command_name(command) + " command");
    }
  }
};

namespace detail {

// Rethrows any failure inside `f` as a ConfigError prefixed by `path`.
template <class F>
auto at_key(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(path, 0) == 0) throw;
    throw ConfigError(path + ": " + what);
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const YAML::Exception& e) {
    throw ConfigError(path + ": " + e.msg);
  }
}

inline void check_keys(const YAML::Node& node, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) {
    throw ConfigError((path.empty() ? std::string("config") : path) +
                      ": expected a mapping");
  }
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key)) {
      throw ConfigError("unknown key '" + (path.empty() ? key : path + "." + key) + "'");
    }
  }
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

template <class T>
T get(const YAML::Node& node, const std::string& path) {
  return at_key(path, [&] { return node.as<T>(); });
}

inline Eigen::VectorXd get_vector(const YAML::Node& node, const std::string& path) {
  return at_key(path, [&] {
    const auto v = node.as<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
        v.data(), static_cast<Eigen::Index>(v.size())));
  });
}

// A list of values or a {from, to, step} range.
inline std::vector<double> get_axis(const YAML::Node& node, const std::string& path) {
  if (node.IsMap()) {
    check_keys(node, path, {"from", "to", "step"});
    return at_key(path, [&] {
      return axis_range(node["from"].as<double>(), node["to"].as<double>(),
                        node["step"].as<double>());
    });
  }
  if (node.IsScalar()) return {get<double>(node, path)};
  return get<std::vector<double>>(node, path);
}

inline ScenarioSpec preset(const std::string& name, const std::string& path) {
  if (name == "washington-se") return washington_se();
  if (name == "washington-ed") return washington_ed();
  throw ConfigError(path + ": unknown preset '" + name +
                    "' (expected washington-se or washington-ed)");
}

inline ScenarioSpec parse_scenario(const YAML::Node& node) {
  const std::string path = "scenario";
  check_keys(node, path,
             {"preset", "name", "periods", "cluster_period_size", "clusters",
              "alpha0", "rho", "trend", "delta", "prior_level", "pilot_clusters"});
  const YAML::Node p = node["preset"];
  const std::optional<ScenarioSpec> base =
      p ? std::optional(preset(get<std::string>(p, path + ".preset"), path + ".preset"))
        : std::nullopt;

  auto required = [&](const char* key) {
    if (!node[key] && !base) throw ConfigError(join(path, key) + ": required");
    return node[key];
  };

  std::string name = base ? base->name : "scenario";
  if (node["name"]) name = get<std::string>(node["name"], path + ".name");

  const int periods = required("periods")
                          ? get<int>(node["periods"], path + ".periods")
                          : base->config.periods();
  const int K = required("cluster_period_size")
                    ? get<int>(node["cluster_period_size"], path + ".cluster_period_size")
                    : base->config.cluster_period_size();
  const int I = node["clusters"] ? get<int>(node["clusters"], path + ".clusters")
                                 : (base ? base->config.clusters() : 1);
  const TrialConfig config = at_key(path, [&] { return TrialConfig(periods, K, I); });

  const double alpha0 = required("alpha0") ? get<double>(node["alpha0"], path + ".alpha0")
                                           : base->corr.alpha0;
  const double rho = node["rho"] ? get<double>(node["rho"], path + ".rho")
                                 : (base ? base->corr.rho : 1.0);
  at_key(path + ".alpha0", [&] { return CorrelationParams(alpha0, 1.0); });
  const CorrelationParams corr =
      at_key(path + ".rho", [&] { return CorrelationParams(alpha0, rho); });

  std::variant<ExplicitTrend, TrendRecurrence> trend =
      base ? base->trend : std::variant<ExplicitTrend, TrendRecurrence>{};
  if (const YAML::Node t = required("trend")) {
    const std::string tp = path + ".trend";
    check_keys(t, tp, {"betas", "standard_errors", "a", "b"});
    if (t["a"] || t["b"]) {
      if (!t["a"] || !t["b"]) throw ConfigError(tp + ": a and b must be given together");
      if (t["betas"] || t["standard_errors"]) {
        throw ConfigError(tp + ": give either betas/standard_errors or a/b");
      }
      trend = TrendRecurrence{get<double>(t["a"], tp + ".a"), get<double>(t["b"], tp + ".b")};
    } else {
      if (!t["betas"]) throw ConfigError(tp + ".betas: required");
      if (!t["standard_errors"]) throw ConfigError(tp + ".standard_errors: required");
      trend = ExplicitTrend{get_vector(t["betas"], tp + ".betas"),
                            get_vector(t["standard_errors"], tp + ".standard_errors")};
    }
  }

  DeltaSpec delta = base ? base->delta : DeltaSpec{};
  if (const YAML::Node d = required("delta")) {
    const std::string dp = path + ".delta";
    if (d.IsScalar()) {
      delta = DeltaSpec{get<double>(d, dp), std::nullopt, std::nullopt};
    } else {
      check_keys(d, dp, {"estimate", "standard_error", "lower", "upper"});
      if (!d["estimate"]) throw ConfigError(dp + ".estimate: required");
      delta = DeltaSpec{get<double>(d["estimate"], dp + ".estimate"), std::nullopt,
                        std::nullopt};
      if (d["standard_error"]) {
        delta.standard_error = get<double>(d["standard_error"], dp + ".standard_error");
      }
      if (d["lower"] || d["upper"]) {
        if (!d["lower"] || !d["upper"]) {
          throw ConfigError(dp + ": lower and upper must be given together");
        }
        delta.bounds = std::make_pair(get<double>(d["lower"], dp + ".lower"),
                                      get<double>(d["upper"], dp + ".upper"));
      }
    }
  }

  ScenarioSpec spec{name, config, corr, trend, delta,
                    base ? base->prior_level : (std::holds_alternative<TrendRecurrence>(trend)
                                                    ? 0.80
                                                    : 0.95),
                    base ? base->pilot_clusters : 0};
  if (node["prior_level"]) spec.prior_level = get<double>(node["prior_level"], path + ".prior_level");
  if (node["pilot_clusters"]) {
    spec.pilot_clusters = get<int>(node["pilot_clusters"], path + ".pilot_clusters");
  }
  at_key(path, [&] {
    spec.validate();
    spec.prior();
    return 0;
  });
  return spec;
}

inline GridSettings parse_grid(const YAML::Node& node) {
  const std::string path = "grid";
  check_keys(node, path, {"name", "periods", "clusters", "delta", "prior_level",
                          "pilot_clusters", "a", "b", "cluster_period_size",
                          "alpha0", "rho"});
  GridSettings g;
  HypotheticalSettings& s = g.settings;
  if (node["name"]) g.name = get<std::string>(node["name"], path + ".name");
  if (node["periods"]) s.periods = get<int>(node["periods"], path + ".periods");
  if (node["clusters"]) s.clusters = get<int>(node["clusters"], path + ".clusters");
  if (node["delta"]) s.delta = get<double>(node["delta"], path + ".delta");
  if (node["prior_level"]) s.prior_level = get<double>(node["prior_level"], path + ".prior_level");
  if (node["pilot_clusters"]) {
    s.pilot_clusters = get<int>(node["pilot_clusters"], path + ".pilot_clusters");
  }
  for (const char* key : {"a", "b", "cluster_period_size", "alpha0", "rho"}) {
    if (!node[key]) throw ConfigError(join(path, key) + ": required");
  }
  g.axes.a = get_axis(node["a"], path + ".a");
  g.axes.b = get_axis(node["b"], path + ".b");
  for (double k : get_axis(node["cluster_period_size"], path + ".cluster_period_size")) {
    if (k != std::round(k)) throw ConfigError(path + ".cluster_period_size: values must be integers");
    g.axes.cluster_period_size.push_back(static_cast<int>(k));
  }
  g.axes.alpha0 = get_axis(node["alpha0"], path + ".alpha0");
  g.axes.rho = get_axis(node["rho"], path + ".rho");

  // Validate every axis value up front so a bad value names its key.
  at_key(path + ".periods", [&] { return TrialConfig(s.periods, 1, s.clusters); });
  for (int K : g.axes.cluster_period_size) {
    at_key(path + ".cluster_period_size", [&] { return TrialConfig(s.periods, K); });
  }
  for (double a0 : g.axes.alpha0) {
    at_key(path + ".alpha0", [&] { return CorrelationParams(a0, 1.0); });
  }
  for (double r : g.axes.rho) {
    at_key(path + ".rho", [&] { return CorrelationParams(0.5, r); });
  }
  if (!(s.prior_level > 0.0 && s.prior_level < 1.0)) {
    throw ConfigError(path + ".prior_level: must lie in (0, 1)");
  }
  if (s.pilot_clusters < 0) throw ConfigError(path + ".pilot_clusters: must be positive");
  if (g.axes.size() == 0) throw ConfigError(path + ": every axis needs at least one value");
  return g;
}

inline FixedDesign parse_design(const YAML::Node& node) {
  if (node.IsScalar()) {
    const auto kind = get<std::string>(node, "design");
    if (kind == "optimal") return {"optimal", {}};
    if (kind == "balanced" || kind == "lawrie") return {kind, {}};
    throw ConfigError("design: expected optimal, balanced, lawrie or a weight list, got '" +
                      kind + "'");
  }
  return {"weights", get_vector(node, "design")};
}

}  // namespace detail

inline RunConfig parse_config(const YAML::Node& root) {
  using namespace detail;
  if (!root || root.IsNull()) throw ConfigError("config: empty document");
  check_keys(root, "", {"command", "scenario", "grid", "design", "sampler",
                        "optimizer", "oracle", "output"});
  RunConfig cfg;
  if (root["command"]) cfg.command = parse_command(get<std::string>(root["command"], "command"));
  if (root["scenario"]) cfg.scenario = parse_scenario(root["scenario"]);
  if (root["grid"]) cfg.grid = parse_grid(root["grid"]);
  if (root["design"]) {
    FixedDesign d = parse_design(root["design"]);
    if (d.kind != "optimal") cfg.design = std::move(d);
  }
  if (const YAML::Node s = root["sampler"]) {
    check_keys(s, "sampler", {"samples", "seed"});
    if (s["samples"]) {
      const auto n = get<long long>(s["samples"], "sampler.samples");
      if (n < 1) throw ConfigError("sampler.samples: must be at least 1");
      cfg.sampler.samples = static_cast<std::size_t>(n);
    }
    if (s["seed"]) cfg.sampler.seed = get<std::uint64_t>(s["seed"], "sampler.seed");
  }
  if (const YAML::Node o = root["optimizer"]) {
    check_keys(o, "optimizer", {"restarts", "tolerance", "max_iterations", "restart_seed",
                                "kkt_tolerance", "kkt_step", "threads", "warm_start"});
    OptimizeOptions& opt = cfg.optimizer;
    if (o["restarts"]) opt.restarts = get<int>(o["restarts"], "optimizer.restarts");
    if (o["tolerance"]) opt.tolerance = get<double>(o["tolerance"], "optimizer.tolerance");
    if (o["max_iterations"]) {
      opt.max_iterations = get<int>(o["max_iterations"], "optimizer.max_iterations");
    }
    if (o["restart_seed"]) {
      opt.restart_seed = get<std::uint64_t>(o["restart_seed"], "optimizer.restart_seed");
    }
    if (o["kkt_tolerance"]) {
      opt.kkt_tolerance = get<double>(o["kkt_tolerance"], "optimizer.kkt_tolerance");
    }
    if (o["kkt_step"]) opt.kkt_step = get<double>(o["kkt_step"], "optimizer.kkt_step");
    if (o["threads"]) {
      const int t = get<int>(o["threads"], "optimizer.threads");
      if (t < 1) throw ConfigError("optimizer.threads: must be at least 1");
      opt.threads = static_cast<unsigned>(t);
    }
    if (o["warm_start"]) opt.warm_start = get_vector(o["warm_start"], "optimizer.warm_start");
  }
  if (const YAML::Node o = root["oracle"]) {
    check_keys(o, "oracle", {"resolution"});
    if (o["resolution"]) cfg.oracle_resolution = get<int>(o["resolution"], "oracle.resolution");
  }
  if (const YAML::Node o = root["output"]) {
    check_keys(o, "output", {"directory", "format", "prefix"});
    if (o["directory"]) cfg.output.directory = get<std::string>(o["directory"], "output.directory");
    if (o["format"]) cfg.output.format = parse_format(get<std::string>(o["format"], "output.format"));
    if (o["prefix"]) cfg.output.prefix = get<std::string>(o["prefix"], "output.prefix");
  }
  cfg.validate();
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config: " + e.msg + " at line " + std::to_string(e.mark.line + 1));
  }
  return parse_config(root);
}

inline RunConfig load_config(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) {
    throw IoError("cannot open config file " + file.string());
  }
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::BadFile&) {
    throw IoError("cannot read config file " + file.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError(file.string() + ": " + e.msg + " at line " +
                      std::to_string(e.mark.line + 1));
  }
  return parse_config(root);
}

}  // namespace swopt

#endif  // SWOPT_CONFIG_HPP
