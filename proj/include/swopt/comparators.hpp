#ifndef SWOPT_COMPARATORS_HPP
#define SWOPT_COMPARATORS_HPP

// Closed-form reference designs.

#include <string>

#include <Eigen/Dense>

#include "swopt/design.hpp"
#include "swopt/model.hpp"

namespace swopt {

/// Equal allocation 1/(J-1) to every sequence.
inline DesignWeights balanced_design(const TrialConfig& config) {
  const int S = config.num_sequences();
  return DesignWeights(Eigen::VectorXd::Constant(S, 1.0 / S));
}

/// Optimal allocation for a linear mixed model analysis with exchangeable
/// correlation (normal approximation):
///
///   p_outer = {1 + alpha0 (3K - 1)} / (2 {1 + alpha0 (JK - 1)})
///   p_inner = K alpha0 / {1 + alpha0 (JK - 1)}
///
/// on the first/last and the interior sequences respectively.
inline DesignWeights lawrie_design(const TrialConfig& config, double alpha0) {
  if (!(alpha0 > 0.0 && alpha0 < 1.0)) {
    throw ConfigError("alpha0 must lie in (0, 1), got " + std::to_string(alpha0));
  }
  const int J = config.periods();
  const double K = config.cluster_period_size();
  const double denom = 1.0 + alpha0 * (J * K - 1.0);
  const double outer = (1.0 + alpha0 * (3.0 * K - 1.0)) / (2.0 * denom);
  const double inner = K * alpha0 / denom;
  Eigen::VectorXd p = Eigen::VectorXd::Constant(J - 1, inner);
  p(0) = outer;
  p(J - 2) = outer;
  return DesignWeights(p);
}

}  // namespace swopt

#endif  // SWOPT_COMPARATORS_HPP
