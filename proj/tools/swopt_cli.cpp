// swopt: Bayesian D_A-optimal allocation for stepped-wedge trials.
//
//   swopt --config run.yaml [--command grid] [--seed 7] [--samples 1000]
//         [--restarts 5] [--out results/] [--format tsv]
//
// Exit status: 0 success, 1 invalid configuration, 2 a solve did not
// converge, 3 file error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "swopt/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bayesian optimal cluster allocation for stepped-wedge trials"};
  app.set_version_flag("--version", std::string("swopt ") + swopt::kVersion);

  std::string config_path;
  std::optional<std::string> command;
  std::optional<std::uint64_t> seed;
  std::optional<long long> samples;
  std::optional<int> restarts;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;
  bool quiet = false;

  app.add_option("--config", config_path, "YAML run configuration")->required();
  app.add_option("--command", command,
                 "optimize | compare | grid | lawrie | oracle-check (overrides the file)");
  app.add_option("--seed", seed, "LHS seed");
  app.add_option("--samples", samples, "number of LHS draws");
  app.add_option("--restarts", restarts, "optimizer restarts");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", format, "csv | tsv");
  app.add_flag("-q,--quiet", quiet, "do not print the summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? swopt::kExitSuccess : swopt::kExitValidation;
  }

  try {
    swopt::RunConfig cfg = swopt::load_config(config_path);
    if (command) cfg.command = swopt::parse_command(*command);
    if (seed) cfg.sampler.seed = *seed;
    if (samples) {
      if (*samples < 1) throw swopt::ConfigError("--samples must be at least 1");
      cfg.sampler.samples = static_cast<std::size_t>(*samples);
    }
    if (restarts) cfg.optimizer.restarts = *restarts;
    if (out_dir) cfg.output.directory = *out_dir;
    if (format) cfg.output.format = swopt::parse_format(*format);
    cfg.validate();

    const swopt::RunReport report = swopt::run(cfg);
    if (!quiet) {
      std::cout << report.summary << "results: " << report.results_path.string() << "\n"
                << "metadata: " << report.metadata_path.string() << "\n";
    }
    if (!report.all_converged()) {
      std::cerr << "swopt: at least one solve did not converge or failed its KKT check\n";
      return swopt::kExitNonConvergence;
    }
    return swopt::kExitSuccess;
  } catch (const swopt::IoError& e) {
    std::cerr << "swopt: " << e.what() << "\n";
    return swopt::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "swopt: " << e.what() << "\n";
    return swopt::kExitValidation;
  }
}
