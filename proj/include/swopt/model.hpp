#ifndef SWOPT_MODEL_HPP
#define SWOPT_MODEL_HPP

// Marginal mean model for cluster-period prevalences in a cross-sectional
// stepped-wedge trial:
//
//   logit(mu_j) = beta_j + X_sj * delta
//
// together with the per-sequence Jacobian D_s = d mu / d theta^T and the
// working covariance V_s of the cluster-period means.  The parameter vector
// is always laid out as theta = (beta_1, ..., beta_J, delta).
//
// Sequences are identified by the period at which they switch to the
// intervention, s = 2, ..., J.  Periods are 1-based in the public API and
// 0-based in Eigen storage.

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "swopt/errors.hpp"

namespace swopt {

// Smallest binomial variance accepted from the mean model.  Below this the
// working covariance is numerically singular (|linear predictor| > ~27.6).
inline constexpr double kMinBinomialVariance = 1e-12;

/// Trial geometry: J periods, K participants per cluster-period, I clusters,
/// and the J-1 standard stepped-wedge sequences.
class TrialConfig {
 public:
  TrialConfig(int periods, int cluster_period_size, int clusters = 1)
      : periods_(periods),
        cluster_period_size_(cluster_period_size),
        clusters_(clusters) {
    if (periods < 3) {
      throw ConfigError("periods must be at least 3, got " +
                        std::to_string(periods));
    }
    if (cluster_period_size < 1) {
      throw ConfigError("cluster_period_size must be positive, got " +
                        std::to_string(cluster_period_size));
    }
    if (clusters < 1) {
      throw ConfigError("clusters must be positive, got " +
                        std::to_string(clusters));
    }
    exposure_ = Eigen::MatrixXd::Zero(periods - 1, periods);
    for (int s = 2; s <= periods; ++s) {
      for (int j = s; j <= periods; ++j) exposure_(s - 2, j - 1) = 1.0;
    }
  }

  int periods() const noexcept { return periods_; }
  int cluster_period_size() const noexcept { return cluster_period_size_; }
  int clusters() const noexcept { return clusters_; }
  int num_sequences() const noexcept { return periods_ - 1; }
  // Length of theta.
  int num_parameters() const noexcept { return periods_ + 1; }

  // Row s-2 is the 0/1 treatment indicator of sequence s over periods 1..J.
  const Eigen::MatrixXd& exposure() const noexcept { return exposure_; }

  Eigen::VectorXd sequence(int s) const {
    check_sequence(s);
    return exposure_.row(s - 2).transpose();
  }

  bool treated(int s, int period) const {
    check_sequence(s);
    return period >= s;
  }

  void check_sequence(int s) const {
    if (s < 2 || s > periods_) {
      throw ConfigError("sequence index " + std::to_string(s) +
                        " outside [2, " + std::to_string(periods_) + "]");
    }
  }

 private:
  int periods_;
  int cluster_period_size_;
  int clusters_;
  Eigen::MatrixXd exposure_;
};

/// theta = (beta_1, ..., beta_J, delta).
struct ThetaVector {
  Eigen::VectorXd betas;
  double delta = 0.0;

  ThetaVector() = default;
  ThetaVector(Eigen::VectorXd b, double d) : betas(std::move(b)), delta(d) {}

  static ThetaVector from_packed(const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() < 2) throw ConfigError("packed theta needs at least 2 entries");
    return ThetaVector(v.head(v.size() - 1), v(v.size() - 1));
  }

  Eigen::VectorXd packed() const {
    Eigen::VectorXd v(betas.size() + 1);
    v << betas, delta;
    return v;
  }

  void validate(const TrialConfig& config) const {
    if (betas.size() != config.periods()) {
      throw ConfigError("theta has " + std::to_string(betas.size()) +
                        " period effects, trial has " +
                        std::to_string(config.periods()) + " periods");
    }
    if (!betas.allFinite() || !std::isfinite(delta)) {
      throw ConfigError("theta entries must be finite");
    }
  }
};

/// Working correlation: alpha0 * rho^|j-l| between outcomes in periods j, l.
/// rho == 1 is the simple exchangeable structure.
struct CorrelationParams {
  double alpha0 = 0.0;
  double rho = 1.0;

  CorrelationParams(double a0, double r = 1.0) : alpha0(a0), rho(r) {
    if (!(alpha0 > 0.0 && alpha0 < 1.0)) {
      throw ConfigError("alpha0 must lie in (0, 1), got " +
                        std::to_string(alpha0));
    }
    if (!(rho > 0.0 && rho <= 1.0)) {
      throw ConfigError("rho must lie in (0, 1], got " + std::to_string(rho));
    }
  }

  static CorrelationParams exchangeable(double a0) { return {a0, 1.0}; }
  bool is_exchangeable() const noexcept { return rho == 1.0; }
};

struct SequenceMatrices {
  Eigen::MatrixXd jacobian;    // J x (J+1)
  Eigen::MatrixXd covariance;  // J x J
};

// Inverse logit.  Written so that exp never overflows.
inline double expit(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("logit argument must lie in (0, 1)");
  }
  return std::log(p / (1.0 - p));
}

inline double binomial_variance(double mu) {
  if (!(mu > 0.0 && mu < 1.0)) {
    throw DomainError("mean must lie in the open unit interval, got " +
                      std::to_string(mu));
  }
  return mu * (1.0 - mu);
}

inline Eigen::VectorXd marginal_means(const ThetaVector& theta, int s,
                                      const TrialConfig& config) {
  config.check_sequence(s);
  theta.validate(config);
  const int J = config.periods();
  Eigen::VectorXd mu(J);
  for (int j = 0; j < J; ++j) {
    const double x = (j + 1 >= s) ? 1.0 : 0.0;
    mu(j) = expit(theta.betas(j) + x * theta.delta);
  }
  return mu;
}

namespace detail {

inline Eigen::VectorXd binomial_variances(const Eigen::VectorXd& mu) {
  Eigen::VectorXd nu(mu.size());
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    nu(j) = binomial_variance(mu(j));
    if (nu(j) < kMinBinomialVariance) {
      throw DomainError("binomial variance underflow in period " +
                        std::to_string(j + 1) +
                        "; linear predictor too extreme");
    }
  }
  return nu;
}

// Entries built once for j <= l and mirrored, so the result is exactly
// symmetric.
inline Eigen::MatrixXd covariance_from_variances(const Eigen::VectorXd& nu,
                                                 const CorrelationParams& corr,
                                                 int K) {
  const Eigen::Index J = nu.size();
  Eigen::MatrixXd V(J, J);
  const double inflation = 1.0 + (K - 1) * corr.alpha0;
  for (Eigen::Index j = 0; j < J; ++j) {
    V(j, j) = nu(j) / K * inflation;
    double decay = 1.0;
    for (Eigen::Index l = j + 1; l < J; ++l) {
      decay *= corr.rho;
      const double c = std::sqrt(nu(j) * nu(l)) * corr.alpha0 * decay;
      V(j, l) = c;
      V(l, j) = c;
    }
  }
  return V;
}

inline Eigen::MatrixXd jacobian_from_variances(const Eigen::VectorXd& nu, int s) {
  const Eigen::Index J = nu.size();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(J, J + 1);
  for (Eigen::Index j = 0; j < J; ++j) {
    D(j, j) = nu(j);
    if (j + 1 >= s) D(j, J) = nu(j);
  }
  return D;
}

}  // namespace detail

/// V_s for the cluster-period means of a cluster on sequence s.  Diagonal
/// nu_j/K * {1 + (K-1) alpha0}; off-diagonal sqrt(nu_j nu_l) alpha0 rho^|j-l|.
/// Positive definiteness is checked by Cholesky before returning.
inline Eigen::MatrixXd working_covariance(const ThetaVector& theta, int s,
                                          const CorrelationParams& corr,
                                          const TrialConfig& config) {
  const Eigen::VectorXd nu =
      detail::binomial_variances(marginal_means(theta, s, config));
  Eigen::MatrixXd V = detail::covariance_from_variances(
      nu, corr, config.cluster_period_size());
  Eigen::LLT<Eigen::MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) {
    throw ModelError("working covariance of sequence " + std::to_string(s) +
                     " is not positive definite");
  }
  return V;
}

/// D_s under the logit link: d mu_j / d beta_l = nu_j 1{l = j} and
/// d mu_j / d delta = nu_j X_sj.
inline Eigen::MatrixXd jacobian(const ThetaVector& theta, int s,
                                const TrialConfig& config) {
  const Eigen::VectorXd nu =
      detail::binomial_variances(marginal_means(theta, s, config));
  return detail::jacobian_from_variances(nu, s);
}

inline SequenceMatrices sequence_matrices(const ThetaVector& theta, int s,
                                          const CorrelationParams& corr,
                                          const TrialConfig& config) {
  return {jacobian(theta, s, config),
          working_covariance(theta, s, corr, config)};
}

}  // namespace swopt

#endif  // SWOPT_MODEL_HPP
