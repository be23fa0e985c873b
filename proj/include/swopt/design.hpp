#ifndef SWOPT_DESIGN_HPP
#define SWOPT_DESIGN_HPP

// Approximate-design calculus.  A design is a point p = (p_2, ..., p_J) on
// the simplex; its per-cluster information is
//
//   M(p, theta) = sum_s p_s D_s^T V_s^{-1} D_s
//
// and Var(delta_hat) = [M^{-1}]_{J+1, J+1} / I.  Everything here is computed
// for a single cluster (I = 1); the 1/I factor only shifts the log-variance
// criterion by -log I and is applied at reporting time.

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "swopt/errors.hpp"
#include "swopt/model.hpp"

namespace swopt {

// Reciprocal condition number below which an information matrix is treated
// as unidentifiable.
inline constexpr double kMinReciprocalCondition = 1e-12;

inline constexpr double kSimplexTolerance = 1e-10;

/// Proportions of clusters allocated to sequences 2..J.  Entry 0 is p_2.
class DesignWeights {
 public:
  explicit DesignWeights(Eigen::VectorXd weights,
                         double tolerance = kSimplexTolerance)
      : weights_(std::move(weights)) {
    if (weights_.size() < 2) {
      throw ConfigError("a design needs weights for at least 2 sequences");
    }
    if (!weights_.allFinite()) throw ConfigError("design weights must be finite");
    if (weights_.minCoeff() < 0.0) {
      throw ConfigError("design weights must be nonnegative");
    }
    const double total = weights_.sum();
    if (std::abs(total - 1.0) > tolerance) {
      throw ConfigError("design weights sum to " + std::to_string(total) +
                        ", expected 1");
    }
  }

  // Rescales a nonnegative vector onto the simplex.
  static DesignWeights normalized(const Eigen::VectorXd& raw) {
    if (raw.size() > 0 && raw.minCoeff() < 0.0) {
      throw ConfigError("design weights must be nonnegative");
    }
    const double total = raw.sum();
    if (!(total > 0.0)) throw ConfigError("design weights sum to zero");
    return DesignWeights(raw / total);
  }

  const Eigen::VectorXd& values() const noexcept { return weights_; }
  Eigen::Index size() const noexcept { return weights_.size(); }

  // p_s for sequence s = 2, ..., J.
  double weight(int s) const { return weights_(s - 2); }

  // Maps p_s to p_{J+2-s}.
  DesignWeights reversed() const { return DesignWeights(weights_.reverse()); }

  void check_against(const TrialConfig& config) const {
    if (weights_.size() != config.num_sequences()) {
      throw ConfigError("design has " + std::to_string(weights_.size()) +
                        " weights, trial has " +
                        std::to_string(config.num_sequences()) + " sequences");
    }
  }

 private:
  Eigen::VectorXd weights_;
};

struct InformationMatrix {
  Eigen::MatrixXd matrix;  // (J+1) x (J+1)
};

/// D_s^T V_s^{-1} D_s for one cluster on sequence s.
inline Eigen::MatrixXd sequence_information(const ThetaVector& theta, int s,
                                            const CorrelationParams& corr,
                                            const TrialConfig& config) {
  const Eigen::VectorXd nu =
      detail::binomial_variances(marginal_means(theta, s, config));
  const Eigen::MatrixXd V = detail::covariance_from_variances(
      nu, corr, config.cluster_period_size());
  Eigen::LLT<Eigen::MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) {
    throw ModelError("working covariance of sequence " + std::to_string(s) +
                     " is not positive definite");
  }
  // With V = L L^T, D^T V^{-1} D = W^T W where W = L^{-1} D.
  Eigen::MatrixXd W = detail::jacobian_from_variances(nu, s);
  llt.matrixL().solveInPlace(W);
  Eigen::MatrixXd F = W.transpose() * W;
  // Symmetrize exactly; the product is symmetric only up to rounding.
  return (F + F.transpose()) * 0.5;
}

inline InformationMatrix information_matrix(const DesignWeights& p,
                                            const ThetaVector& theta,
                                            const CorrelationParams& corr,
                                            const TrialConfig& config) {
  p.check_against(config);
  theta.validate(config);
  const int n = config.num_parameters();
  InformationMatrix info{Eigen::MatrixXd::Zero(n, n)};
  for (int s = 2; s <= config.periods(); ++s) {
    const double w = p.weight(s);
    if (w == 0.0) continue;
    info.matrix.noalias() += w * sequence_information(theta, s, corr, config);
  }
  return info;
}

/// [M^{-1}]_{last,last} via a Cholesky solve.  Throws UnidentifiableDesign if
/// M is not positive definite or its reciprocal condition number is below
/// kMinReciprocalCondition.
inline double delta_variance(const Eigen::MatrixXd& information) {
  Eigen::LLT<Eigen::MatrixXd> llt(information);
  if (llt.info() != Eigen::Success) {
    throw UnidentifiableDesign("information matrix is not positive definite");
  }
  const double rcond = llt.rcond();
  if (!(rcond >= kMinReciprocalCondition)) {
    throw UnidentifiableDesign("information matrix is ill-conditioned (rcond " +
                               std::to_string(rcond) + ")");
  }
  const Eigen::Index last = information.rows() - 1;
  Eigen::VectorXd e = Eigen::VectorXd::Unit(information.rows(), last);
  llt.solveInPlace(e);
  const double v = e(last);
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw UnidentifiableDesign("non-positive treatment-effect variance");
  }
  return v;
}

/// Var(delta_hat) for a single cluster.
inline double var_delta(const DesignWeights& p, const ThetaVector& theta,
                        const CorrelationParams& corr,
                        const TrialConfig& config) {
  return delta_variance(information_matrix(p, theta, corr, config).matrix);
}

/// Local D_A criterion log Var(delta_hat) for a single cluster.  For I
/// clusters subtract log(I).
inline double lambda_criterion(const DesignWeights& p, const ThetaVector& theta,
                               const CorrelationParams& corr,
                               const TrialConfig& config) {
  return std::log(var_delta(p, theta, corr, config));
}

// Var(delta_hat) and Lambda for the trial's I clusters.
inline double trial_var_delta(const DesignWeights& p, const ThetaVector& theta,
                              const CorrelationParams& corr,
                              const TrialConfig& config) {
  return var_delta(p, theta, corr, config) / config.clusters();
}

inline double trial_lambda(const DesignWeights& p, const ThetaVector& theta,
                           const CorrelationParams& corr,
                           const TrialConfig& config) {
  return lambda_criterion(p, theta, corr, config) - std::log(config.clusters());
}

}  // namespace swopt

#endif  // SWOPT_DESIGN_HPP
