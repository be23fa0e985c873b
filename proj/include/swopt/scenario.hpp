#ifndef SWOPT_SCENARIO_HPP
#define SWOPT_SCENARIO_HPP

// Efficiency of reference designs, prior construction from estimates or a
// pilot study, and the trial scenarios used for the worked examples and the
// parameter sweeps.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "swopt/comparators.hpp"
#include "swopt/design.hpp"
#include "swopt/errors.hpp"
#include "swopt/model.hpp"
#include "swopt/sampling.hpp"

namespace swopt {

/// Psi of the optimum and of the two reference designs on one shared sample,
/// with the relative number of clusters each reference design needs to match
/// the optimum: ratio = exp(psi_ref - psi_optimal), percent = 100 (ratio - 1).
struct EfficiencyReport {
  double psi_optimal = 0.0;
  double psi_balanced = 0.0;
  double psi_lawrie = 0.0;
  double ratio_balanced = 1.0;
  double ratio_lawrie = 1.0;
  double percent_additional_clusters_balanced = 0.0;
  double percent_additional_clusters_lawrie = 0.0;
};

inline EfficiencyReport efficiency_report(const DesignWeights& p_optimal,
                                          const PsiEvaluator& eval) {
  const TrialConfig& config = eval.config();
  EfficiencyReport r;
  r.psi_optimal = eval.psi(p_optimal);
  r.psi_balanced = eval.psi(balanced_design(config));
  r.psi_lawrie = eval.psi(lawrie_design(config, eval.correlation().alpha0));
  r.ratio_balanced = std::exp(r.psi_balanced - r.psi_optimal);
  r.ratio_lawrie = std::exp(r.psi_lawrie - r.psi_optimal);
  r.percent_additional_clusters_balanced = 100.0 * (r.ratio_balanced - 1.0);
  r.percent_additional_clusters_lawrie = 100.0 * (r.ratio_lawrie - 1.0);
  return r;
}

inline EfficiencyReport efficiency_report(const DesignWeights& p_optimal,
                                          const ObjectiveSample& sample,
                                          const CorrelationParams& corr,
                                          const TrialConfig& config) {
  return efficiency_report(p_optimal, PsiEvaluator(sample, corr, config));
}

/// beta_1 = 0.1 and beta_j = beta_{j-1} + a b^{j-1} for j = 2..J.
inline Eigen::VectorXd time_trend_betas(double a, double b, int periods) {
  if (periods < 3) throw ConfigError("periods must be at least 3");
  Eigen::VectorXd beta(periods);
  beta(0) = 0.1;
  for (int j = 2; j <= periods; ++j) {
    beta(j - 1) = beta(j - 2) + a * std::pow(b, j - 1);
  }
  return beta;
}

/// Standard normal quantile.  Acklam's rational approximation followed by
/// one Halley step against erfc; absolute error well below 1e-9.
inline double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw DomainError("normal quantile needs a probability in (0, 1)");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double kLow = 0.02425;
  double x;
  if (prob < kLow) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - kLow) {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - prob;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

/// Box prior estimate +/- z_{(1+level)/2} * SE per coordinate.
inline ThetaBoxPrior prior_from_estimates(const Eigen::VectorXd& estimates,
                                          const Eigen::VectorXd& standard_errors,
                                          double level) {
  if (estimates.size() != standard_errors.size()) {
    throw ConfigError("estimates and standard errors differ in length");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw ConfigError("prior level must lie in (0, 1)");
  }
  for (Eigen::Index k = 0; k < standard_errors.size(); ++k) {
    if (!(standard_errors(k) > 0.0) || !std::isfinite(standard_errors(k))) {
      throw ConfigError("standard error at coordinate " + std::to_string(k) +
                        " must be positive");
    }
  }
  const double z = normal_quantile(0.5 * (1.0 + level));
  return {estimates - z * standard_errors, estimates + z * standard_errors};
}

/// Coordinatewise standard errors of theta_hat from a balanced pilot trial
/// with `pilot_clusters` clusters: diag((1/I) M_balanced^{-1})^{1/2}.
inline Eigen::VectorXd pilot_standard_errors(const ThetaVector& theta,
                                             const CorrelationParams& corr,
                                             const TrialConfig& config,
                                             int pilot_clusters) {
  if (pilot_clusters < 1) throw ConfigError("pilot_clusters must be positive");
  const Eigen::MatrixXd info =
      information_matrix(balanced_design(config), theta, corr, config).matrix;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success || !(llt.rcond() >= kMinReciprocalCondition)) {
    throw ConfigError("pilot information matrix is singular");
  }
  const Eigen::MatrixXd cov =
      llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  return (cov.diagonal().array() / static_cast<double>(pilot_clusters)).sqrt();
}

inline ThetaBoxPrior prior_from_pilot(const ThetaVector& theta,
                                      const CorrelationParams& corr,
                                      const TrialConfig& config,
                                      int pilot_clusters, double level) {
  return prior_from_estimates(
      theta.packed(), pilot_standard_errors(theta, corr, config, pilot_clusters),
      level);
}

struct ExplicitTrend {
  Eigen::VectorXd betas;
  Eigen::VectorXd standard_errors;
};

// beta_1 = 0.1, beta_j = beta_{j-1} + a b^{j-1}; prior from a pilot trial.
struct TrendRecurrence {
  double a = 0.0;
  double b = 0.0;
};

struct DeltaSpec {
  double estimate = 0.0;
  std::optional<double> standard_error;
  std::optional<std::pair<double, double>> bounds;  // overrides the Wald box
};

struct ScenarioSpec {
  std::string name;
  TrialConfig config;
  CorrelationParams corr;
  std::variant<ExplicitTrend, TrendRecurrence> trend;
  DeltaSpec delta;
  double prior_level = 0.95;
  int pilot_clusters = 0;  // 0 selects the default 2 (J - 1)

  int effective_pilot_clusters() const {
    return pilot_clusters > 0 ? pilot_clusters : 2 * config.num_sequences();
  }

  bool has_recurrence() const {
    return std::holds_alternative<TrendRecurrence>(trend);
  }

  ThetaVector center() const {
    if (const auto* r = std::get_if<TrendRecurrence>(&trend)) {
      return {time_trend_betas(r->a, r->b, config.periods()), delta.estimate};
    }
    return {std::get<ExplicitTrend>(trend).betas, delta.estimate};
  }

  void validate() const {
    if (!(prior_level > 0.0 && prior_level < 1.0)) {
      throw ConfigError("prior_level must lie in (0, 1)");
    }
    if (pilot_clusters < 0) throw ConfigError("pilot_clusters must be positive");
    if (const auto* e = std::get_if<ExplicitTrend>(&trend)) {
      if (e->betas.size() != config.periods() ||
          e->standard_errors.size() != config.periods()) {
        throw ConfigError("trend needs one estimate and standard error per period");
      }
      if (!delta.standard_error && !delta.bounds) {
        throw ConfigError("delta needs a standard error or explicit bounds");
      }
    }
    if (delta.bounds && delta.bounds->first > delta.bounds->second) {
      throw ConfigError("delta lower bound exceeds upper bound");
    }
    center().validate(config);
  }

  ThetaBoxPrior prior() const {
    validate();
    const int J = config.periods();
    Eigen::VectorXd lower, upper;
    if (has_recurrence()) {
      ThetaBoxPrior box = prior_from_pilot(center(), corr, config,
                                           effective_pilot_clusters(), prior_level);
      lower = box.lower;
      upper = box.upper;
    } else {
      const auto& e = std::get<ExplicitTrend>(trend);
      Eigen::VectorXd est = center().packed();
      Eigen::VectorXd se(J + 1);
      se << e.standard_errors, delta.standard_error.value_or(1.0);
      ThetaBoxPrior box = prior_from_estimates(est, se, prior_level);
      lower = box.lower;
      upper = box.upper;
    }
    if (delta.bounds) {
      lower(J) = delta.bounds->first;
      upper(J) = delta.bounds->second;
    }
    return {lower, upper};
  }
};

/// Washington State EPT trial, simple exchangeable fit.
inline ScenarioSpec washington_se() {
  Eigen::VectorXd betas(5), ses(5);
  betas << -2.444, -2.454, -2.535, -2.609, -2.537;
  ses << 0.091, 0.091, 0.094, 0.106, 0.145;
  return {"washington-se",
          TrialConfig(5, 305, 22),
          CorrelationParams(0.0051, 1.0),
          ExplicitTrend{betas, ses},
          DeltaSpec{-0.141, 0.092, std::nullopt},
          0.95,
          0};
}

/// Washington State EPT trial, exponential decay fit.
inline ScenarioSpec washington_ed() {
  Eigen::VectorXd betas(5), ses(5);
  betas << -2.437, -2.444, -2.508, -2.613, -2.552;
  ses << 0.095, 0.089, 0.100, 0.115, 0.131;
  return {"washington-ed",
          TrialConfig(5, 305, 22),
          CorrelationParams(0.0070, 0.7157),
          ExplicitTrend{betas, ses},
          DeltaSpec{-0.124, 0.087, std::nullopt},
          0.95,
          0};
}

struct HypotheticalSettings {
  int periods = 9;
  int clusters = 1;
  double delta = std::log(2.25);
  double prior_level = 0.80;
  int pilot_clusters = 0;  // 0 selects 2 (J - 1)
};

inline ScenarioSpec hypothetical_scenario(double a, double b, int K, double alpha0,
                                          double rho,
                                          const HypotheticalSettings& s = {}) {
  return {"hypothetical",
          TrialConfig(s.periods, K, s.clusters),
          CorrelationParams(alpha0, rho),
          TrendRecurrence{a, b},
          DeltaSpec{s.delta, std::nullopt, std::nullopt},
          s.prior_level,
          s.pilot_clusters};
}

/// from, from + step, ..., to; values rounded to 10 decimals so the axis
/// carries the literal grid values.
inline std::vector<double> axis_range(double from, double to, double step) {
  if (!(step > 0.0) || to < from) throw ConfigError("invalid axis range");
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((to - from) / step + 1e-9));
  for (long k = 0; k <= count; ++k) {
    out.push_back(std::round((from + static_cast<double>(k) * step) * 1e10) / 1e10);
  }
  return out;
}

struct GridAxes {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<int> cluster_period_size;
  std::vector<double> alpha0;
  std::vector<double> rho;

  std::size_t size() const {
    return a.size() * b.size() * cluster_period_size.size() * alpha0.size() *
           rho.size();
  }

  // The full sweep of the hypothetical example.
  static GridAxes full() {
    return {axis_range(-0.5, 0.5, 0.1), axis_range(0.0, 1.0, 0.1),
            {10, 50, 100}, axis_range(0.01, 0.1, 0.01), axis_range(0.5, 1.0, 0.05)};
  }
};

/// Cartesian product of the axes, lexicographic in the order a, b, K,
/// alpha0, rho (rho varies fastest).
inline std::vector<ScenarioSpec> scenario_grid(const GridAxes& axes,
                                               const HypotheticalSettings& s = {}) {
  if (axes.size() == 0) throw ConfigError("every grid axis needs at least one value");
  std::vector<ScenarioSpec> specs;
  specs.reserve(axes.size());
  for (double a : axes.a)
    for (double b : axes.b)
      for (int K : axes.cluster_period_size)
        for (double alpha0 : axes.alpha0)
          for (double rho : axes.rho) {
            specs.push_back(hypothetical_scenario(a, b, K, alpha0, rho, s));
          }
  return specs;
}

}  // namespace swopt

#endif  // SWOPT_SCENARIO_HPP
