#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "swopt/harness.hpp"

namespace swopt {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("swopt_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kWashington = R"(
command: optimize
scenario:
  preset: washington-se
sampler:
  samples: 300
  seed: 11
)";

const char* kHypothetical = R"(
command: compare
scenario:
  name: cell
  periods: 9
  cluster_period_size: 50
  alpha0: 0.05
  rho: 0.5
  trend: {a: -0.2, b: 0.4}
  delta: 0.8109302162163288
sampler:
  samples: 80
  seed: 3
)";

std::string expect_config_error(const std::string& yaml) {
  try {
    parse_config_text(yaml);
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no ConfigError for:\n" << yaml;
  return {};
}

TEST(ConfigTest, DefaultsAndPresets) {
  const RunConfig cfg = parse_config_text("scenario: {preset: washington-ed}");
  EXPECT_EQ(cfg.command, Command::optimize);
  EXPECT_EQ(cfg.sampler.samples, 500u);
  EXPECT_EQ(cfg.optimizer.restarts, 5);
  EXPECT_EQ(cfg.output.format, OutputFormat::csv);
  EXPECT_EQ(cfg.output_prefix(), "optimize");
  EXPECT_EQ(cfg.scenario->name, "washington-ed");
  EXPECT_EQ(cfg.scenario->corr.rho, 0.7157);

  const RunConfig over = parse_config_text(
      "scenario: {preset: washington-se, alpha0: 0.02, name: what-if}");
  EXPECT_EQ(over.scenario->corr.alpha0, 0.02);
  EXPECT_EQ(over.scenario->config.cluster_period_size(), 305);
  EXPECT_EQ(over.scenario->name, "what-if");
}

TEST(ConfigTest, ExplicitScenarioMatchesPreset) {
  const RunConfig cfg = parse_config_text(R"(
scenario:
  periods: 5
  cluster_period_size: 305
  clusters: 22
  alpha0: 0.0051
  rho: 1.0
  trend:
    betas: [-2.444, -2.454, -2.535, -2.609, -2.537]
    standard_errors: [0.091, 0.091, 0.094, 0.106, 0.145]
  delta: {estimate: -0.141, standard_error: 0.092}
)");
  const ThetaBoxPrior a = cfg.scenario->prior();
  const ThetaBoxPrior b = washington_se().prior();
  EXPECT_TRUE((a.lower.array() == b.lower.array()).all());
  EXPECT_TRUE((a.upper.array() == b.upper.array()).all());
}

TEST(ConfigTest, RecurrenceScenarioUsesPilotPrior) {
  const RunConfig cfg = parse_config_text(kHypothetical);
  const ScenarioSpec& s = *cfg.scenario;
  EXPECT_TRUE(s.has_recurrence());
  EXPECT_DOUBLE_EQ(s.prior_level, 0.80);
  EXPECT_EQ(s.effective_pilot_clusters(), 16);
  const ThetaBoxPrior ref = hypothetical_scenario(-0.2, 0.4, 50, 0.05, 0.5).prior();
  EXPECT_TRUE((s.prior().upper.array() == ref.upper.array()).all());
}

TEST(ConfigTest, ErrorsNameTheField) {
  EXPECT_NE(expect_config_error("scenario: {preset: washington-se, alpha0: 0}")
                .find("scenario.alpha0"),
            std::string::npos);
  EXPECT_NE(expect_config_error("scenario: {preset: washington-se, rho: 1.5}")
                .find("scenario.rho"),
            std::string::npos);
  EXPECT_NE(expect_config_error("scenario: {preset: washington-se, alpah0: 0.1}")
                .find("scenario.alpah0"),
            std::string::npos);
  EXPECT_NE(expect_config_error("scenario: {periods: 5, cluster_period_size: 10, alpha0: 0.1}")
                .find("scenario.trend"),
            std::string::npos);
  EXPECT_NE(expect_config_error("scenario: {preset: washington-se}\nsampler: {samples: 0}")
                .find("sampler.samples"),
            std::string::npos);
  EXPECT_NE(expect_config_error("scenario: {preset: washington-se}\nsampler: {seed: banana}")
                .find("sampler.seed"),
            std::string::npos);
  EXPECT_NE(expect_config_error("command: sweep\nscenario: {preset: washington-se}")
                .find("command"),
            std::string::npos);
  EXPECT_NE(expect_config_error("command: grid").find("grid"), std::string::npos);
  EXPECT_NE(expect_config_error("scenario: {preset: washington-se}\noutput: {format: xls}")
                .find("output.format"),
            std::string::npos);
  EXPECT_NE(expect_config_error(R"(
command: grid
grid: {a: [0], b: [0.5], cluster_period_size: [50], alpha0: [0.05, 0], rho: [0.5]}
)").find("grid.alpha0"),
            std::string::npos);
  EXPECT_NE(expect_config_error("scenario: [1, 2").find("config"), std::string::npos);
  EXPECT_THROW(load_config("/nonexistent/run.yaml"), IoError);
}

TEST(ConfigTest, GridAxesAcceptRangesAndLists) {
  const RunConfig cfg = parse_config_text(R"(
command: grid
grid:
  a: {from: -0.5, to: 0.5, step: 0.1}
  b: {from: 0, to: 1, step: 0.1}
  cluster_period_size: 50
  alpha0: [0.05]
  rho: [0.5, 1.0]
)");
  EXPECT_EQ(cfg.grid->axes.size(), 242u);
  EXPECT_EQ(cfg.grid->axes.a.front(), -0.5);
  EXPECT_EQ(cfg.grid->axes.b[7], 0.7);
  EXPECT_EQ(cfg.grid->settings.periods, 9);
  EXPECT_EQ(cfg.grid->settings.prior_level, 0.80);
}

TEST(ResultsTest, RoundTripWithQuotingAndEmptyFields) {
  ResultRow row;
  row.scenario = "odd, \"name\"";
  row.a = -0.5;
  row.cluster_period_size = 50;
  row.alpha0 = 0.1;
  row.rho = 0.8;
  row.periods = 4;
  row.weights = Eigen::Vector3d(0.1, 0.2, 0.7);
  row.psi_optimal = -1.0 / 3.0;
  row.status = "error: a, b";
  row.seed = 18446744073709551615ull;
  row.samples = 7;
  ResultRow failed = row;
  failed.weights.resize(0);
  for (char delim : {',', '\t'}) {
    std::stringstream s;
    write_results(s, {row, failed}, 4, delim);
    const auto back = read_results(s, delim);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].scenario, row.scenario);
    EXPECT_EQ(back[0].a, row.a);
    EXPECT_FALSE(back[0].b.has_value());
    EXPECT_TRUE((back[0].weights.array() == row.weights.array()).all());
    EXPECT_EQ(*back[0].psi_optimal, *row.psi_optimal);
    EXPECT_FALSE(back[0].psi_lawrie.has_value());
    EXPECT_EQ(back[0].status, row.status);
    EXPECT_EQ(back[0].seed, row.seed);
    EXPECT_EQ(back[1].weights.size(), 0);
  }
}

TEST(RunTest, ClusterAllocationKeepsTheTotal) {
  EXPECT_EQ(detail::cluster_allocation(Eigen::Vector4d(0.3493, 0.1761, 0.1780, 0.2966), 22),
            Eigen::Vector4i(8, 4, 4, 6));
  EXPECT_EQ(detail::cluster_allocation(Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3), 4),
            Eigen::Vector3i(2, 1, 1));
  EXPECT_EQ(detail::cluster_allocation(Eigen::Vector2d(0.5, 0.5), 1).sum(), 1);
}

TEST(RunTest, OptimizeWashingtonWritesOneRow) {
  RunConfig cfg = parse_config_text(kWashington);
  cfg.output.directory = scratch("optimize");
  const RunReport r = run(cfg);
  ASSERT_EQ(r.rows.size(), 1u);
  const ResultRow& row = r.rows[0];
  const Eigen::Vector4d reported(0.3493, 0.1761, 0.1780, 0.2966);
  EXPECT_LE((row.weights - reported).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_EQ(row.status, kStatusConverged);
  EXPECT_FALSE(row.psi_balanced.has_value());
  EXPECT_TRUE(r.all_converged());
  EXPECT_TRUE(fs::exists(r.results_path));
  const std::string meta = slurp(r.metadata_path);
  EXPECT_NE(meta.find("seed: 11"), std::string::npos);
  EXPECT_NE(meta.find("samples: 300"), std::string::npos);
  EXPECT_NE(meta.find("wall_time_seconds"), std::string::npos);
  EXPECT_NE(r.summary.find("p_2"), std::string::npos);
  EXPECT_NE(r.summary.find("clusters per sequence for I = 22"), std::string::npos);
}

TEST(RunTest, RepeatedRunsAreByteIdentical) {
  RunConfig cfg = parse_config_text(kWashington);
  cfg.command = Command::compare;
  cfg.output.directory = scratch("repeat1");
  const RunReport a = run(cfg);
  cfg.output.directory = scratch("repeat2");
  const RunReport b = run(cfg);
  EXPECT_EQ(slurp(a.results_path), slurp(b.results_path));
}

TEST(RunTest, CompareWashingtonLawrieLossBelowOnePercent) {
  RunConfig cfg = parse_config_text(kWashington);
  cfg.command = Command::compare;
  cfg.output.directory = scratch("compare");
  const ResultRow row = run(cfg).rows.at(0);
  EXPECT_LT(*row.pct_additional_lawrie, 1.0);
  EXPECT_GE(*row.pct_additional_lawrie, -1e-4);
  EXPECT_GT(*row.pct_additional_balanced, *row.pct_additional_lawrie);
}

TEST(RunTest, CompareBalancedAgainstItselfIsZero) {
  RunConfig cfg = parse_config_text(std::string(kWashington) + "design: balanced\n");
  cfg.command = Command::compare;
  cfg.output.directory = scratch("balanced");
  const ResultRow row = run(cfg).rows.at(0);
  EXPECT_EQ(row.status, kStatusFixedDesign);
  EXPECT_EQ(*row.pct_additional_balanced, 0.0);
  EXPECT_EQ(*row.psi_optimal, *row.psi_balanced);
  EXPECT_FALSE(row.kkt_min_derivative.has_value());
}

TEST(RunTest, LawrieCommand) {
  RunConfig cfg = parse_config_text(kWashington);
  cfg.command = Command::lawrie;
  cfg.output.directory = scratch("lawrie");
  const ResultRow row = run(cfg).rows.at(0);
  EXPECT_NEAR(row.weights(0), 0.3227, 5e-5);
  EXPECT_NEAR(row.weights(1), 0.1773, 5e-5);
  EXPECT_EQ(row.status, kStatusClosedForm);
}

TEST(RunTest, OneCellGridMatchesCompare) {
  RunConfig cmp = parse_config_text(kHypothetical);
  cmp.output.directory = scratch("one_cell_compare");
  cmp.output.prefix = "rows";
  RunConfig grid = parse_config_text(R"(
command: grid
grid:
  name: cell
  a: [-0.2]
  b: [0.4]
  cluster_period_size: [50]
  alpha0: [0.05]
  rho: [0.5]
sampler:
  samples: 80
  seed: 3
)");
  grid.output.directory = scratch("one_cell_grid");
  grid.output.prefix = "rows";
  const RunReport a = run(cmp);
  const RunReport b = run(grid);
  ASSERT_EQ(b.rows.size(), 1u);
  EXPECT_EQ(slurp(a.results_path), slurp(b.results_path));
}

const char* kSmallGrid = R"(
command: grid
grid:
  a: [-0.5, 0.3]
  b: [0.0, 1.0]
  cluster_period_size: [10]
  alpha0: [0.02, 0.08]
  rho: [0.6]
sampler:
  samples: 40
  seed: 9
optimizer:
  restarts: 2
)";

TEST(RunTest, GridOutputIsIndependentOfThreads) {
  RunConfig cfg = parse_config_text(kSmallGrid);
  cfg.output.directory = scratch("grid1");
  cfg.optimizer.threads = 1;
  const RunReport serial = run(cfg);
  cfg.output.directory = scratch("grid3");
  cfg.optimizer.threads = 3;
  const RunReport pooled = run(cfg);
  EXPECT_EQ(serial.rows.size(), 8u);
  EXPECT_EQ(slurp(serial.results_path), slurp(pooled.results_path));
  // Row order follows the axes: a, b, K, alpha0, rho.
  EXPECT_EQ(*serial.rows[0].a, -0.5);
  EXPECT_EQ(*serial.rows[1].a, -0.5);
  EXPECT_EQ(serial.rows[1].alpha0, 0.08);
  EXPECT_EQ(*serial.rows[2].b, 1.0);
  EXPECT_EQ(*serial.rows[4].a, 0.3);
}

TEST(RunTest, GridCsvReparsesAndPsiIsReproducibleFromSeed) {
  RunConfig cfg = parse_config_text(kSmallGrid);
  for (OutputFormat format : {OutputFormat::csv, OutputFormat::tsv}) {
    cfg.output.format = format;
    cfg.output.directory = scratch("reparse");
    const RunReport report = run(cfg);
    std::ifstream in(report.results_path);
    const auto rows = read_results(in, cfg.output.delimiter());
    ASSERT_EQ(rows.size(), 8u);
    for (const ResultRow& row : rows) {
      ASSERT_EQ(row.weights.size(), 8);
      EXPECT_NEAR(row.weights.sum(), 1.0, 1e-8);
      EXPECT_GE(row.weights.minCoeff(), 0.0);
      HypotheticalSettings s = cfg.grid->settings;
      const ScenarioSpec spec =
          hypothetical_scenario(*row.a, *row.b, row.cluster_period_size, row.alpha0, row.rho, s);
      const ObjectiveSample sample = lhs_sample(spec.prior(), row.samples, row.seed);
      const DesignWeights p(row.weights, 1e-8);
      EXPECT_NEAR(psi_estimate(p, sample, spec.corr, spec.config), *row.psi_optimal, 1e-10);
      EXPECT_NEAR(psi_estimate(balanced_design(spec.config), sample, spec.corr, spec.config),
                  *row.psi_balanced, 1e-10);
    }
  }
}

TEST(RunTest, FailingGridCellIsRecordedAndSweepContinues) {
  RunConfig cfg = parse_config_text(R"(
command: grid
grid:
  a: [-6.0, 0.0]
  b: [1.0]
  cluster_period_size: [10]
  alpha0: [0.05]
  rho: [0.5]
sampler:
  samples: 20
  seed: 1
)");
  cfg.output.directory = scratch("failing");
  const RunReport r = run(cfg);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].status.rfind("error", 0), 0u) << r.rows[0].status;
  EXPECT_EQ(r.rows[0].weights.size(), 0);
  EXPECT_EQ(r.rows[1].status, kStatusConverged);
  EXPECT_EQ(r.failed_rows(), 1u);
  std::ifstream in(r.results_path);
  EXPECT_EQ(read_results(in).size(), 2u);
}

TEST(RunTest, NonConvergenceIsAStatusNotACrash) {
  RunConfig cfg = parse_config_text(kWashington);
  cfg.optimizer.max_iterations = 1;
  cfg.optimizer.restarts = 1;
  cfg.output.directory = scratch("nonconverged");
  const RunReport r = run(cfg);
  EXPECT_EQ(r.rows.at(0).status, kStatusNotConverged);
  EXPECT_FALSE(r.all_converged());
}

TEST(OracleCheckTest, SymmetricThreePeriodGapIsTiny) {
  RunConfig cfg = parse_config_text(R"(
command: oracle-check
scenario:
  name: symmetric
  periods: 3
  cluster_period_size: 20
  alpha0: 0.05
  rho: 0.8
  trend: {betas: [-1, -1, -1], standard_errors: [1, 1, 1]}
  delta: {estimate: 0, lower: 0, upper: 0}
sampler:
  samples: 1
oracle:
  resolution: 1000
)");
  cfg.output.directory = scratch("oracle3");
  // A zero-width prior on the betas as well.
  std::get<ExplicitTrend>(cfg.scenario->trend).standard_errors.setConstant(1e-300);
  const RunReport r = run(cfg);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_LT(std::abs(*r.rows[0].psi_optimal - *r.rows[1].psi_optimal), 1e-4);
  EXPECT_LE(*r.rows[0].psi_optimal, *r.rows[1].psi_optimal + 1e-12);
  EXPECT_NEAR(r.rows[0].weights(0), 0.5, 1e-3);
}

TEST(OracleCheckTest, WashingtonSolverDominatesLattice) {
  RunConfig cfg = parse_config_text(kWashington);
  cfg.command = Command::oracle_check;
  cfg.oracle_resolution = 40;
  cfg.output.directory = scratch("oracle5");
  const RunReport r = run(cfg);
  EXPECT_LE(*r.rows[0].psi_optimal, *r.rows[1].psi_optimal);
  EXPECT_NE(r.summary.find("KKT certificate: satisfied"), std::string::npos);
}

TEST(OracleCheckTest, LargeTrialsAreRefused) {
  RunConfig cfg = parse_config_text(kHypothetical);
  cfg.command = Command::oracle_check;
  cfg.output.directory = scratch("oracle9");
  try {
    run(cfg);
    FAIL() << "expected OracleGuardError";
  } catch (const OracleGuardError& e) {
    EXPECT_NE(std::string(e.what()).find("J <= 5"), std::string::npos);
  }
}

TEST(RunTest, UnwritableOutputIsAnIoError) {
  RunConfig cfg = parse_config_text(kWashington);
  const fs::path blocker = scratch("blocker");
  fs::create_directories(blocker.parent_path());
  std::ofstream(blocker) << "not a directory";
  cfg.output.directory = blocker / "sub";
  EXPECT_THROW(run(cfg), IoError);
}

}  // namespace
}  // namespace swopt
