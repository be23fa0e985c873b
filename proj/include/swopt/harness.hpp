#ifndef SWOPT_HARNESS_HPP
#define SWOPT_HARNESS_HPP

// Commands behind the swopt executable.  Each run writes
//
//   <directory>/<prefix>.csv|.tsv   result rows (see results.hpp)
//   <directory>/<prefix>.meta.txt   seed, sample size, solver settings, wall time
//
// and returns the rows together with a human-readable summary.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "swopt/config.hpp"
#include "swopt/optimizer.hpp"
#include "swopt/results.hpp"
#include "swopt/scenario.hpp"
#include "swopt/version.hpp"

namespace swopt {

inline constexpr const char* kStatusConverged = "converged";
inline constexpr const char* kStatusNotConverged = "not-converged";
inline constexpr const char* kStatusKktViolated = "kkt-violated";
inline constexpr const char* kStatusFixedDesign = "fixed-design";
inline constexpr const char* kStatusClosedForm = "closed-form";

// Largest J accepted by oracle-check.
inline constexpr int kOracleMaxPeriods = 5;

struct RunReport {
  std::vector<ResultRow> rows;
  std::string summary;
  std::filesystem::path results_path;
  std::filesystem::path metadata_path;
  double wall_seconds = 0.0;

  bool all_converged() const {
    for (const auto& r : rows) {
      if (r.status == kStatusNotConverged || r.status == kStatusKktViolated) return false;
    }
    return true;
  }
  std::size_t failed_rows() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.status.rfind("error", 0) == 0;
    return n;
  }
};

namespace detail {

inline ResultRow row_identity(const ScenarioSpec& spec, const RunConfig& cfg) {
  ResultRow row;
  row.scenario = spec.name;
  if (const auto* t = std::get_if<TrendRecurrence>(&spec.trend)) {
    row.a = t->a;
    row.b = t->b;
  }
  row.cluster_period_size = spec.config.cluster_period_size();
  row.alpha0 = spec.corr.alpha0;
  row.rho = spec.corr.rho;
  row.periods = spec.config.periods();
  row.seed = cfg.sampler.seed;
  row.samples = cfg.sampler.samples;
  return row;
}

inline PsiEvaluator make_evaluator(const ScenarioSpec& spec, const RunConfig& cfg) {
  return PsiEvaluator(lhs_sample(spec.prior(), cfg.sampler.samples, cfg.sampler.seed),
                      spec.corr, spec.config);
}

inline std::string solver_status(const OptimizationResult& r) {
  if (!r.converged) return kStatusNotConverged;
  if (!r.certificate.satisfied) return kStatusKktViolated;
  return kStatusConverged;
}

inline DesignWeights resolve_design(const FixedDesign& d, const ScenarioSpec& spec) {
  if (d.kind == "balanced") return balanced_design(spec.config);
  if (d.kind == "lawrie") return lawrie_design(spec.config, spec.corr.alpha0);
  DesignWeights p(d.weights, 1e-8);
  p.check_against(spec.config);
  return p;
}

struct Evaluated {
  ResultRow row;
  std::optional<OptimizationResult> solve;
};

// The work shared by optimize, compare and every grid cell.
inline Evaluated evaluate_scenario(const ScenarioSpec& spec, const RunConfig& cfg,
                                   bool with_comparators, unsigned threads) {
  Evaluated out{row_identity(spec, cfg), std::nullopt};
  ResultRow& row = out.row;
  const PsiEvaluator eval = make_evaluator(spec, cfg);
  std::optional<DesignWeights> p;
  if (cfg.design) {
    p = resolve_design(*cfg.design, spec);
    row.status = kStatusFixedDesign;
  } else {
    OptimizeOptions opts = cfg.optimizer;
    opts.threads = threads;
    out.solve = optimize_design(eval, opts);
    p = out.solve->weights;
    row.status = solver_status(*out.solve);
    row.kkt_min_derivative = out.solve->certificate.min_derivative;
  }
  row.weights = p->values();
  row.psi_optimal = eval.psi(*p);
  row.psi_mc_se = eval.standard_error(*p);
  if (with_comparators) {
    const EfficiencyReport e = efficiency_report(*p, eval);
    row.psi_balanced = e.psi_balanced;
    row.psi_lawrie = e.psi_lawrie;
    row.pct_additional_balanced = e.percent_additional_clusters_balanced;
    row.pct_additional_lawrie = e.percent_additional_clusters_lawrie;
  }
  return out;
}

inline std::string fixed(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline std::string weights_line(const Eigen::VectorXd& w) {
  std::string s;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    s += "  p_" + std::to_string(i + 2) + " = " + fixed(std::abs(w(i)) < 1e-6 ? 0.0 : w(i)) + "\n";
  }
  return s;
}

// Whole clusters per sequence: floor(p I), then the largest remainders
// (earliest sequence first on ties) take the leftover clusters.
inline Eigen::VectorXi cluster_allocation(const Eigen::VectorXd& p, int clusters) {
  const Eigen::Index S = p.size();
  Eigen::VectorXi n(S);
  std::vector<std::pair<double, Eigen::Index>> rem;
  int used = 0;
  for (Eigen::Index s = 0; s < S; ++s) {
    const double x = p(s) * clusters;
    n(s) = static_cast<int>(std::floor(x));
    used += n(s);
    rem.emplace_back(x - n(s), s);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < clusters - used && k < static_cast<int>(S); ++k) ++n(rem[static_cast<std::size_t>(k)].second);
  return n;
}

inline std::string allocation_line(const Eigen::VectorXd& p, int clusters) {
  if (clusters < 2) return {};
  const Eigen::VectorXi n = cluster_allocation(p, clusters);
  std::string s = "clusters per sequence for I = " + std::to_string(clusters) + ":";
  for (Eigen::Index i = 0; i < n.size(); ++i) s += " " + std::to_string(n(i));
  return s + "\n";
}

inline std::string describe(const ScenarioSpec& spec, const RunConfig& cfg) {
  std::ostringstream s;
  s << "scenario " << spec.name << ": J=" << spec.config.periods()
    << " K=" << spec.config.cluster_period_size() << " alpha0=" << spec.corr.alpha0
    << " rho=" << spec.corr.rho << "\n"
    << "sample: " << cfg.sampler.samples << " LHS draws, seed " << cfg.sampler.seed << "\n";
  return s.str();
}

// Writes the header at construction and flushes every row, so an
// interrupted run leaves a valid prefix.
class ResultWriter {
 public:
  ResultWriter(const RunConfig& cfg, int periods)
      : path_(cfg.output.directory / (cfg.output_prefix() + cfg.output.extension())),
        delim_(cfg.output.delimiter()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output.directory, ec);
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write " + path_.string());
    write_header(out_, periods, delim_);
    check();
  }

  void write(const ResultRow& row) {
    write_row(out_, row, delim_);
    check();
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  void check() {
    out_.flush();
    if (!out_) throw IoError("write failed on " + path_.string());
  }

  std::filesystem::path path_;
  char delim_;
  std::ofstream out_;
};

inline std::filesystem::path write_metadata(const RunConfig& cfg, const RunReport& report,
                                            const std::vector<std::string>& extra) {
  const auto path = cfg.output.directory / (cfg.output_prefix() + ".meta.txt");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const OptimizeOptions& o = cfg.optimizer;
  out << "engine: swopt " << kVersion << "\n"
      << "command: " << command_name(cfg.command) << "\n"
      << "seed: " << cfg.sampler.seed << "\n"
      << "samples: " << cfg.sampler.samples << "\n"
      << "sampler: latin hypercube, one shared seed for every scenario\n"
      << "design: " << (cfg.design ? cfg.design->kind : std::string("optimal")) << "\n"
      << "restarts: " << o.restarts << "\n"
      << "restart_seed: " << o.restart_seed << "\n"
      << "tolerance: " << detail::format_number(o.tolerance) << "\n"
      << "max_iterations: " << o.max_iterations << "\n"
      << "kkt_tolerance: " << detail::format_number(o.kkt_tolerance) << "\n"
      << "kkt_step: " << detail::format_number(o.kkt_step) << "\n"
      << "threads: " << o.threads << "\n";
  for (const auto& line : extra) out << line << "\n";
  out << "results: " << report.results_path.filename().string() << "\n"
      << "rows: " << report.rows.size() << "\n"
      << "failed_rows: " << report.failed_rows() << "\n"
      << "all_converged: " << (report.all_converged() ? "true" : "false") << "\n"
      << "wall_time_seconds: " << fixed(report.wall_seconds, 3) << "\n";
  if (!out) throw IoError("write failed on " + path.string());
  return path;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline RunReport single_row_run(const RunConfig& cfg, bool with_comparators) {
  Stopwatch clock;
  const ScenarioSpec& spec = *cfg.scenario;
  ResultWriter writer(cfg, spec.config.periods());
  Evaluated ev = evaluate_scenario(spec, cfg, with_comparators, cfg.optimizer.threads);
  writer.write(ev.row);

  RunReport report;
  std::ostringstream s;
  s << describe(spec, cfg);
  const ResultRow& r = ev.row;
  s << (cfg.design ? "design (" + cfg.design->kind + "):\n" : std::string("optimal design:\n"))
    << weights_line(r.weights) << allocation_line(r.weights, spec.config.clusters())
    << "Psi = " << fixed(*r.psi_optimal, 6) << " (MC s.e. " << fixed(*r.psi_mc_se, 6) << ")\n";
  if (ev.solve) {
    s << "solver: " << r.status << ", " << ev.solve->iterations << " iterations, "
      << ev.solve->restarts_used << " restarts, min KKT derivative "
      << detail::format_number(ev.solve->certificate.min_derivative) << "\n";
  }
  if (with_comparators) {
    s << "balanced: Psi = " << fixed(*r.psi_balanced, 6) << ", "
      << fixed(*r.pct_additional_balanced, 2) << "% additional clusters\n"
      << "lawrie:   Psi = " << fixed(*r.psi_lawrie, 6) << ", "
      << fixed(*r.pct_additional_lawrie, 2) << "% additional clusters\n";
  }
  report.rows.push_back(std::move(ev.row));
  report.summary = s.str();
  report.results_path = writer.path();
  report.wall_seconds = clock.seconds();
  report.metadata_path = write_metadata(cfg, report, {"scenario: " + spec.name});
  return report;
}

}  // namespace detail

/// Optimal design for one scenario.  Comparator columns are left empty.
inline RunReport run_optimize(const RunConfig& cfg) {
  cfg.validate();
  return detail::single_row_run(cfg, false);
}

/// Optimal (or fixed) design plus balanced and Lawrie on the same sample.
inline RunReport run_compare(const RunConfig& cfg) {
  cfg.validate();
  return detail::single_row_run(cfg, true);
}

/// Closed-form Lawrie allocation, with Psi of it and of the balanced design.
inline RunReport run_lawrie(const RunConfig& cfg) {
  cfg.validate();
  detail::Stopwatch clock;
  const ScenarioSpec& spec = *cfg.scenario;
  detail::ResultWriter writer(cfg, spec.config.periods());
  const PsiEvaluator eval = detail::make_evaluator(spec, cfg);
  const DesignWeights p = lawrie_design(spec.config, spec.corr.alpha0);
  ResultRow row = detail::row_identity(spec, cfg);
  row.weights = p.values();
  row.psi_lawrie = eval.psi(p);
  row.psi_balanced = eval.psi(balanced_design(spec.config));
  row.psi_mc_se = eval.standard_error(p);
  row.status = kStatusClosedForm;
  writer.write(row);

  RunReport report;
  report.summary = detail::describe(spec, cfg) + "lawrie design:\n" +
                   detail::weights_line(row.weights) + "Psi = " +
                   detail::fixed(*row.psi_lawrie, 6) + " (balanced " +
                   detail::fixed(*row.psi_balanced, 6) + ")\n";
  report.rows.push_back(std::move(row));
  report.results_path = writer.path();
  report.wall_seconds = clock.seconds();
  report.metadata_path = detail::write_metadata(cfg, report, {"scenario: " + spec.name});
  return report;
}

/// One row per grid cell in axis order.  Cells run on a worker pool; a
/// single writer emits them in order as soon as each prefix is complete.
/// A failing cell is recorded in its status column and the sweep goes on.
inline RunReport run_grid(const RunConfig& cfg) {
  cfg.validate();
  detail::Stopwatch clock;
  const GridSettings& g = *cfg.grid;
  std::vector<ScenarioSpec> specs = scenario_grid(g.axes, g.settings);
  for (auto& s : specs) s.name = g.name;
  detail::ResultWriter writer(cfg, g.settings.periods);

  const std::size_t n = specs.size();
  std::vector<std::optional<ResultRow>> slots(n);
  std::mutex mutex;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      ResultRow row;
      try {
        row = detail::evaluate_scenario(specs[i], cfg, true, 1).row;
      } catch (const std::exception& e) {
        row = detail::row_identity(specs[i], cfg);
        row.weights.resize(0);
        row.status = std::string("error: ") + e.what();
      }
      {
        std::lock_guard lock(mutex);
        slots[i] = std::move(row);
      }
      ready.notify_all();
    }
  };
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(cfg.optimizer.threads, n));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);

  RunReport report;
  std::exception_ptr write_failure;
  for (std::size_t i = 0; i < n; ++i) {
    std::unique_lock lock(mutex);
    ready.wait(lock, [&] { return slots[i].has_value(); });
    ResultRow row = std::move(*slots[i]);
    slots[i].reset();
    lock.unlock();
    try {
      writer.write(row);
    } catch (...) {
      write_failure = std::current_exception();
      next = n;
      break;
    }
    report.rows.push_back(std::move(row));
  }
  for (auto& t : pool) t.join();
  if (write_failure) std::rethrow_exception(write_failure);

  std::ostringstream s;
  s << "grid " << g.name << ": " << n << " cells (J=" << g.settings.periods << "), "
    << cfg.sampler.samples << " LHS draws per cell, seed " << cfg.sampler.seed << "\n"
    << "failed cells: " << report.failed_rows() << "\n"
    << "all converged: " << (report.all_converged() ? "yes" : "no") << "\n";
  report.summary = s.str();
  report.results_path = writer.path();
  report.wall_seconds = clock.seconds();
  std::ostringstream axes;
  auto list = [&](const char* name, const auto& v) {
    axes.str("");
    axes << name << ": [";
    for (std::size_t i = 0; i < v.size(); ++i) axes << (i ? ", " : "") << v[i];
    axes << "]";
    return axes.str();
  };
  report.metadata_path = detail::write_metadata(
      cfg, report,
      {"grid: " + g.name, "periods: " + std::to_string(g.settings.periods),
       "delta: " + detail::format_number(g.settings.delta),
       "prior_level: " + detail::format_number(g.settings.prior_level),
       "pilot_clusters: " + std::to_string(specs.front().effective_pilot_clusters()),
       list("a", g.axes.a), list("b", g.axes.b),
       list("cluster_period_size", g.axes.cluster_period_size),
       list("alpha0", g.axes.alpha0), list("rho", g.axes.rho)});
  return report;
}

/// Solver against the exhaustive lattice oracle, with the KKT certificate.
/// Two rows: the solver optimum, then the best lattice point.
inline RunReport run_oracle_check(const RunConfig& cfg) {
  cfg.validate();
  const ScenarioSpec& spec = *cfg.scenario;
  if (spec.config.periods() > kOracleMaxPeriods) {
    throw OracleGuardError("oracle-check is limited to J <= " +
                           std::to_string(kOracleMaxPeriods) + "; scenario has J = " +
                           std::to_string(spec.config.periods()));
  }
  detail::Stopwatch clock;
  detail::ResultWriter writer(cfg, spec.config.periods());
  const PsiEvaluator eval = detail::make_evaluator(spec, cfg);
  const OptimizationResult solve = optimize_design(eval, cfg.optimizer);
  const GridOracleResult oracle =
      grid_oracle(eval, cfg.oracle_resolution, cfg.optimizer.threads);

  ResultRow solver_row = detail::row_identity(spec, cfg);
  solver_row.weights = solve.weights.values();
  solver_row.psi_optimal = solve.objective;
  solver_row.psi_mc_se = eval.standard_error(solve.weights);
  solver_row.kkt_min_derivative = solve.certificate.min_derivative;
  solver_row.status = detail::solver_status(solve);
  ResultRow oracle_row = detail::row_identity(spec, cfg);
  oracle_row.scenario += "/oracle";
  oracle_row.weights = oracle.weights.values();
  oracle_row.psi_optimal = oracle.objective;
  oracle_row.psi_mc_se = eval.standard_error(oracle.weights);
  oracle_row.status = "lattice m=" + std::to_string(cfg.oracle_resolution);
  writer.write(solver_row);
  writer.write(oracle_row);

  const double gap = solve.objective - oracle.objective;
  std::ostringstream s;
  s << detail::describe(spec, cfg) << "solver optimum (" << solver_row.status << "):\n"
    << detail::weights_line(solver_row.weights) << "lattice optimum (m = "
    << cfg.oracle_resolution << ", " << oracle.points << " points):\n"
    << detail::weights_line(oracle_row.weights)
    << "Psi solver = " << detail::format_number(solve.objective) << "\n"
    << "Psi oracle = " << detail::format_number(oracle.objective) << "\n"
    << "gap (solver - oracle) = " << detail::format_number(gap)
    << (gap <= 1e-12 ? "  [solver dominates]" : "  [ORACLE BETTER]") << "\n"
    << "KKT directional derivatives:";
  for (Eigen::Index i = 0; i < solve.certificate.directional_derivatives.size(); ++i) {
    s << " " << detail::format_number(solve.certificate.directional_derivatives(i));
  }
  s << "\nKKT certificate: " << (solve.certificate.satisfied ? "satisfied" : "NOT satisfied")
    << " (tolerance " << detail::format_number(solve.certificate.tolerance) << ")\n";

  RunReport report;
  report.rows = {solver_row, oracle_row};
  report.summary = s.str();
  report.results_path = writer.path();
  report.wall_seconds = clock.seconds();
  report.metadata_path = detail::write_metadata(
      cfg, report,
      {"scenario: " + spec.name, "oracle_resolution: " + std::to_string(cfg.oracle_resolution),
       "oracle_points: " + std::to_string(oracle.points), "gap: " + detail::format_number(gap)});
  return report;
}

inline RunReport run(const RunConfig& cfg) {
  switch (cfg.command) {
    case Command::optimize: return run_optimize(cfg);
    case Command::compare: return run_compare(cfg);
    case Command::grid: return run_grid(cfg);
    case Command::lawrie: return run_lawrie(cfg);
    case Command::oracle_check: return run_oracle_check(cfg);
  }
  throw ConfigError("unknown command");
}

// Process exit codes.
inline constexpr int kExitSuccess = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNonConvergence = 2;
inline constexpr int kExitIo = 3;

}  // namespace swopt

#endif  // SWOPT_HARNESS_HPP
