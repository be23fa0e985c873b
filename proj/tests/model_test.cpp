#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "swopt/model.hpp"

namespace swopt {
namespace {

ThetaVector washington_theta() {
  Eigen::VectorXd b(5);
  b << -2.444, -2.454, -2.535, -2.609, -2.537;
  return {b, -0.141};
}

TEST(TrialConfigTest, StandardSteppedWedgeSequences) {
  for (int J = 3; J <= 12; ++J) {
    TrialConfig config(J, 10);
    ASSERT_EQ(config.exposure().rows(), J - 1);
    std::set<std::vector<double>> distinct;
    for (int s = 2; s <= J; ++s) {
      const Eigen::VectorXd x = config.sequence(s);
      for (int j = 1; j <= J; ++j) {
        EXPECT_EQ(x(j - 1), j >= s ? 1.0 : 0.0);
        EXPECT_EQ(config.treated(s, j), j >= s);
      }
      EXPECT_EQ(x.minCoeff(), 0.0);
      EXPECT_EQ(x.maxCoeff(), 1.0);
      distinct.insert(std::vector<double>(x.data(), x.data() + J));
    }
    EXPECT_EQ(distinct.size(), static_cast<std::size_t>(J - 1));
  }
}

TEST(TrialConfigTest, RejectsInvalidGeometry) {
  EXPECT_THROW(TrialConfig(2, 10), ConfigError);
  EXPECT_THROW(TrialConfig(5, 0), ConfigError);
  EXPECT_THROW(TrialConfig(5, 10, 0), ConfigError);
  TrialConfig config(5, 10);
  EXPECT_THROW(config.sequence(1), ConfigError);
  EXPECT_THROW(config.sequence(6), ConfigError);
}

TEST(CorrelationParamsTest, Domain) {
  EXPECT_NO_THROW(CorrelationParams(0.05, 1.0));
  EXPECT_THROW(CorrelationParams(0.0, 0.5), ConfigError);
  EXPECT_THROW(CorrelationParams(1.0, 0.5), ConfigError);
  EXPECT_THROW(CorrelationParams(0.05, 0.0), ConfigError);
  EXPECT_THROW(CorrelationParams(0.05, 1.01), ConfigError);
  EXPECT_TRUE(CorrelationParams::exchangeable(0.1).is_exchangeable());
}

TEST(ExpitTest, Examples) {
  EXPECT_EQ(expit(0.0), 0.5);
  // 1 / (1 + e^2.444) evaluated at 30 digits.
  EXPECT_NEAR(expit(-2.444), 0.0798784262328522882, 1e-15);
  EXPECT_NEAR(expit(-2.444), 0.0799, 1e-4);
  EXPECT_NEAR(expit(logit(0.3)), 0.3, 1e-15);
}

TEST(ExpitTest, SymmetricMonotoneAndSaturating) {
  double previous = 0.0;
  for (double x = -800.0; x <= 800.0; x += 0.37) {
    const double y = expit(x);
    ASSERT_TRUE(std::isfinite(y));
    EXPECT_GE(y, previous);
    EXPECT_NEAR(y + expit(-x), 1.0, 1e-15);
    previous = y;
  }
  EXPECT_EQ(expit(-1e6), 0.0);
  EXPECT_EQ(expit(1e6), 1.0);
  EXPECT_THROW(logit(0.0), DomainError);
  EXPECT_THROW(logit(1.0), DomainError);
}

TEST(MarginalMeansTest, Examples) {
  TrialConfig config(3, 10);
  const ThetaVector zero(Eigen::VectorXd::Zero(3), 0.0);
  EXPECT_TRUE(marginal_means(zero, 2, config).isApprox(Eigen::Vector3d(0.5, 0.5, 0.5)));

  const ThetaVector treated(Eigen::VectorXd::Zero(3), std::log(2.25));
  const Eigen::VectorXd mu = marginal_means(treated, 3, config);
  EXPECT_EQ(mu(0), 0.5);
  EXPECT_EQ(mu(1), 0.5);
  EXPECT_NEAR(mu(2), 0.692307692307692308, 1e-15);  // 2.25 / 3.25

  TrialConfig wash(5, 305);
  EXPECT_NEAR(marginal_means(washington_theta(), 2, wash)(0), 0.0799, 1e-4);
}

TEST(MarginalMeansTest, RejectsBadInputs) {
  TrialConfig config(3, 10);
  const ThetaVector zero(Eigen::VectorXd::Zero(3), 0.0);
  EXPECT_THROW(marginal_means(zero, 1, config), ConfigError);
  EXPECT_THROW(marginal_means(zero, 4, config), ConfigError);
  const ThetaVector short_theta(Eigen::VectorXd::Zero(2), 0.0);
  EXPECT_THROW(marginal_means(short_theta, 2, config), ConfigError);
  ThetaVector nan_theta(Eigen::VectorXd::Zero(3), std::nan(""));
  EXPECT_THROW(marginal_means(nan_theta, 2, config), ConfigError);
}

TEST(BinomialVarianceTest, Examples) {
  EXPECT_EQ(binomial_variance(0.5), 0.25);
  EXPECT_NEAR(binomial_variance(0.0799), 0.07352, 1e-5);
  EXPECT_NEAR(binomial_variance(0.0799), 0.07351599, 1e-15);
  EXPECT_NEAR(binomial_variance(0.3), 0.21, 1e-15);
  EXPECT_THROW(binomial_variance(0.0), DomainError);
  EXPECT_THROW(binomial_variance(1.0), DomainError);
  EXPECT_THROW(binomial_variance(-0.1), DomainError);
}

TEST(WorkingCovarianceTest, Examples) {
  const ThetaVector zero(Eigen::VectorXd::Zero(4), 0.0);
  for (double rho : {0.3, 0.7, 1.0}) {
    const Eigen::MatrixXd V =
        working_covariance(zero, 2, CorrelationParams(0.01, rho), TrialConfig(4, 10));
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(V(j, j), 0.02725, 1e-15);
  }
  const Eigen::MatrixXd V =
      working_covariance(zero, 3, CorrelationParams(0.1, 0.5), TrialConfig(4, 10));
  EXPECT_NEAR(V(0, 2), 0.00625, 1e-16);
  EXPECT_NEAR(V(1, 3), 0.00625, 1e-16);
}

TEST(WorkingCovarianceTest, DecayWithUnitRhoIsExchangeable) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int J = 3 + trial % 7;
    TrialConfig config(J, 1 + trial * 7);
    const ThetaVector theta = oracle::random_theta(gen, J);
    const double alpha0 = 0.001 + 0.01 * trial;
    for (int s = 2; s <= J; ++s) {
      const Eigen::MatrixXd decay =
          working_covariance(theta, s, CorrelationParams(alpha0, 1.0), config);
      const Eigen::MatrixXd exch =
          working_covariance(theta, s, CorrelationParams::exchangeable(alpha0), config);
      EXPECT_EQ((decay - exch).cwiseAbs().maxCoeff(), 0.0);
      // Against the closed form: constant off-diagonal correlation.
      const Eigen::MatrixXd ref = oracle::covariance(theta, s, alpha0, 1.0, config.cluster_period_size());
      EXPECT_LE((decay - ref).cwiseAbs().maxCoeff(), 1e-15 * ref.cwiseAbs().maxCoeff());
    }
  }
}

TEST(WorkingCovarianceTest, SymmetricPositiveDefiniteAndMatchesClosedForm) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> a0(0.001, 0.5), rho(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int J = 3 + trial % 8;
    TrialConfig config(J, 1 + (trial * 13) % 400);
    const ThetaVector theta = oracle::random_theta(gen, J, 3.0);
    const CorrelationParams corr(a0(gen), rho(gen));
    const int s = 2 + trial % (J - 1);
    const Eigen::MatrixXd V = working_covariance(theta, s, corr, config);
    for (int j = 0; j < J; ++j)
      for (int l = 0; l < J; ++l) ASSERT_EQ(V(j, l), V(l, j));
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(V).info(), Eigen::Success);
    const Eigen::MatrixXd ref =
        oracle::covariance(theta, s, corr.alpha0, corr.rho, config.cluster_period_size());
    EXPECT_LE((V - ref).cwiseAbs().maxCoeff(), 1e-14 * ref.cwiseAbs().maxCoeff());
  }
}

TEST(WorkingCovarianceTest, TimeReversalSymmetry) {
  for (int J : {3, 5, 9}) {
    TrialConfig config(J, 50);
    const ThetaVector theta(Eigen::VectorXd::Constant(J, -0.7), 0.0);
    for (double rho : {0.5, 0.8, 1.0}) {
      const CorrelationParams corr(0.05, rho);
      for (int s = 2; s <= J; ++s) {
        const Eigen::MatrixXd V = working_covariance(theta, s, corr, config);
        const Eigen::MatrixXd W = working_covariance(theta, J + 2 - s, corr, config);
        const Eigen::MatrixXd reversed = W.reverse();
        EXPECT_EQ((V - reversed).cwiseAbs().maxCoeff(), 0.0);
      }
    }
  }
}

TEST(WorkingCovarianceTest, ExtremeLinearPredictorIsRejected) {
  TrialConfig config(3, 10);
  const ThetaVector theta(Eigen::Vector3d(-40.0, 0.0, 0.0), 0.0);
  EXPECT_THROW(working_covariance(theta, 2, CorrelationParams(0.05), config), DomainError);
}

TEST(JacobianTest, HalfPrevalenceExample) {
  const ThetaVector zero(Eigen::VectorXd::Zero(3), 0.0);
  const Eigen::MatrixXd D = jacobian(zero, 2, TrialConfig(3, 10));
  Eigen::MatrixXd expected(3, 4);
  expected << 0.25, 0, 0, 0,
              0, 0.25, 0, 0.25,
              0, 0, 0.25, 0.25;
  EXPECT_EQ((D - expected).cwiseAbs().maxCoeff(), 0.0);
}

TEST(JacobianTest, DeltaColumnVanishesBeforeSwitch) {
  std::mt19937_64 gen(3);
  for (int J = 3; J <= 9; ++J) {
    TrialConfig config(J, 20);
    const ThetaVector theta = oracle::random_theta(gen, J);
    for (int s = 2; s <= J; ++s) {
      const Eigen::MatrixXd D = jacobian(theta, s, config);
      for (int j = 1; j < s; ++j) EXPECT_EQ(D(j - 1, J), 0.0);
      for (int j = s; j <= J; ++j) EXPECT_EQ(D(j - 1, J), D(j - 1, j - 1));
      // One nonzero per beta column, on the diagonal.
      for (int j = 0; j < J; ++j) {
        for (int l = 0; l < J; ++l) {
          if (j != l) {
            EXPECT_EQ(D(j, l), 0.0);
          }
        }
        EXPECT_GT(D(j, j), 0.0);
      }
    }
  }
}

TEST(JacobianTest, WashingtonFiniteDifference) {
  const Eigen::MatrixXd D = jacobian(washington_theta(), 3, TrialConfig(5, 305));
  const Eigen::MatrixXd fd = oracle::finite_difference_jacobian(washington_theta(), 3, 1e-6);
  EXPECT_LT((D - fd).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(JacobianTest, MatchesFiniteDifferencesAtRandomDraws) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int J = 3 + trial % 7;
    const ThetaVector theta = oracle::random_theta(gen, J, 2.5);
    const int s = 2 + static_cast<int>(gen() % static_cast<unsigned>(J - 1));
    const Eigen::MatrixXd D = jacobian(theta, s, TrialConfig(J, 30));
    const Eigen::MatrixXd fd = oracle::finite_difference_jacobian(theta, s, 1e-5);
    const double rel = (D - fd).cwiseAbs().maxCoeff() / D.cwiseAbs().maxCoeff();
    EXPECT_LE(rel, 1e-6) << "trial " << trial;
  }
}

TEST(SequenceMatricesTest, BundlesJacobianAndCovariance) {
  const TrialConfig config(5, 305);
  const CorrelationParams corr(0.007, 0.7157);
  const SequenceMatrices m = sequence_matrices(washington_theta(), 4, corr, config);
  EXPECT_EQ(m.jacobian.rows(), 5);
  EXPECT_EQ(m.jacobian.cols(), 6);
  EXPECT_TRUE(m.covariance.isApprox(working_covariance(washington_theta(), 4, corr, config)));
}

}  // namespace
}  // namespace swopt
