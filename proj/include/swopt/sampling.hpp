#ifndef SWOPT_SAMPLING_HPP
#define SWOPT_SAMPLING_HPP

// Box priors on theta, Latin Hypercube draws from them, and the Monte Carlo
// estimate of the Bayesian objective
//
//   Psi(p) = E_theta[ Lambda(p, theta) ]
//
// as the arithmetic mean of Lambda over the draws.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "swopt/design.hpp"
#include "swopt/errors.hpp"
#include "swopt/model.hpp"

namespace swopt {

// Draws from mt19937_64 mapped without the implementation-defined standard
// distributions, so samples are identical across standard libraries.
namespace rng {

inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) by rejection.
inline std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x;
  do {
    x = gen();
  } while (x >= limit);
  return x % n;
}

inline std::vector<std::size_t> permutation(std::mt19937_64& gen, std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = uniform_index(gen, i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

// Flat Dirichlet draw on the (k-1)-simplex.
inline Eigen::VectorXd dirichlet(std::mt19937_64& gen, Eigen::Index k) {
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < k; ++i) v(i) = -std::log1p(-uniform01(gen));
  return v / v.sum();
}

}  // namespace rng

/// Coordinatewise uniform prior on theta = (beta_1, ..., beta_J, delta).
struct ThetaBoxPrior {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  ThetaBoxPrior(Eigen::VectorXd lo, Eigen::VectorXd hi)
      : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size() || lower.size() < 2) {
      throw ConfigError("prior bounds must have equal length of at least 2");
    }
    if (!lower.allFinite() || !upper.allFinite()) {
      throw ConfigError("prior bounds must be finite");
    }
    for (Eigen::Index k = 0; k < lower.size(); ++k) {
      if (lower(k) > upper(k)) {
        throw ConfigError("prior lower bound exceeds upper bound at coordinate " +
                          std::to_string(k));
      }
    }
  }

  static ThetaBoxPrior point(const ThetaVector& theta) {
    return {theta.packed(), theta.packed()};
  }

  Eigen::Index dimension() const noexcept { return lower.size(); }

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return x.size() == dimension() && (x.array() >= lower.array()).all() &&
           (x.array() <= upper.array()).all();
  }
};

/// Seeded draws of theta (one per row) plus optionally cached Lambda values.
struct ObjectiveSample {
  std::uint64_t seed = 0;
  Eigen::MatrixXd draws;                  // n x (J+1)
  std::optional<Eigen::VectorXd> lambdas;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(draws.rows());
  }
  ThetaVector theta(std::size_t i) const {
    return ThetaVector::from_packed(draws.row(static_cast<Eigen::Index>(i)).transpose());
  }
};

/// Latin Hypercube sample: for every coordinate each of the n equal-width
/// strata holds exactly one draw, placed uniformly within its stratum.
inline ObjectiveSample lhs_sample(const ThetaBoxPrior& prior, std::size_t n,
                                  std::uint64_t seed) {
  if (n == 0) throw ConfigError("LHS sample size must be positive");
  std::mt19937_64 gen(seed);
  const Eigen::Index d = prior.dimension();
  const auto rows = static_cast<Eigen::Index>(n);
  ObjectiveSample sample;
  sample.seed = seed;
  sample.draws.resize(rows, d);
  const double nd = static_cast<double>(n);
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto perm = rng::permutation(gen, n);
    const double width = prior.upper(k) - prior.lower(k);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double u = (static_cast<double>(perm[i]) + rng::uniform01(gen)) / nd;
      sample.draws(i, k) = (width == 0.0) ? prior.lower(k)
                                          : std::min(prior.lower(k) + width * u,
                                                     prior.upper(k));
    }
  }
  return sample;
}

namespace detail {

// Neumaier-compensated sum in index order.
inline double compensated_sum(const Eigen::VectorXd& v) {
  double sum = 0.0, c = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double t = sum + v(i);
    if (std::abs(sum) >= std::abs(v(i))) {
      c += (sum - t) + v(i);
    } else {
      c += (v(i) - t) + sum;
    }
    sum = t;
  }
  return sum + c;
}

inline double sample_standard_error(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n < 2) return 0.0;
  const double mean = compensated_sum(v) / static_cast<double>(n);
  const double ss = (v.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

}  // namespace detail

/// Psi by direct recomputation: Lambda is rebuilt from the model at every
/// draw.  Slow; the reference the cached evaluator is checked against.
inline double psi_estimate(const DesignWeights& p, const ObjectiveSample& sample,
                           const CorrelationParams& corr,
                           const TrialConfig& config) {
  if (sample.size() == 0) throw ConfigError("objective sample is empty");
  Eigen::VectorXd lambdas(static_cast<Eigen::Index>(sample.size()));
  for (std::size_t i = 0; i < sample.size(); ++i) {
    try {
      lambdas(static_cast<Eigen::Index>(i)) =
          lambda_criterion(p, sample.theta(i), corr, config);
    } catch (const DrawError&) {
      throw;
    } catch (const Error& e) {
      throw DrawError(i, e.what());
    }
  }
  return detail::compensated_sum(lambdas) / static_cast<double>(sample.size());
}

/// Caches D_s^T V_s^{-1} D_s for every (draw, sequence) pair so that Psi and
/// its gradient can be evaluated repeatedly for different designs over one
/// sample.  Immutable after construction; const methods are thread-safe.
class PsiEvaluator {
 public:
  PsiEvaluator(const ObjectiveSample& sample, const CorrelationParams& corr,
               const TrialConfig& config)
      : corr_(corr), config_(config), seed_(sample.seed) {
    if (sample.size() == 0) throw ConfigError("objective sample is empty");
    if (sample.draws.cols() != config.num_parameters()) {
      throw ConfigError("sample dimension does not match the trial");
    }
    num_draws_ = sample.size();
    const int S = config.num_sequences();
    blocks_.reserve(num_draws_ * static_cast<std::size_t>(S));
    for (std::size_t i = 0; i < num_draws_; ++i) {
      try {
        const ThetaVector theta = sample.theta(i);
        for (int s = 2; s <= config.periods(); ++s) {
          blocks_.push_back(sequence_information(theta, s, corr, config));
        }
      } catch (const Error& e) {
        throw DrawError(i, e.what());
      }
    }
  }

  std::size_t num_draws() const noexcept { return num_draws_; }
  int num_sequences() const noexcept { return config_.num_sequences(); }
  const TrialConfig& config() const noexcept { return config_; }
  const CorrelationParams& correlation() const noexcept { return corr_; }
  std::uint64_t seed() const noexcept { return seed_; }

  // Cached D_s^T V_s^{-1} D_s at draw i.
  const Eigen::MatrixXd& block(std::size_t i, int s) const {
    return blocks_[i * static_cast<std::size_t>(num_sequences()) +
                   static_cast<std::size_t>(s - 2)];
  }

  Eigen::MatrixXd information(std::size_t i, const Eigen::VectorXd& p) const {
    Workspace ws(config_.num_parameters());
    assemble(i, p, ws.info);
    return ws.info;
  }

  /// Lambda at every draw.  Throws DrawError naming the first draw whose
  /// information matrix is unidentifiable.
  Eigen::VectorXd lambdas(const DesignWeights& p) const {
    p.check_against(config_);
    Workspace ws(config_.num_parameters());
    Eigen::VectorXd out(static_cast<Eigen::Index>(num_draws_));
    for (std::size_t i = 0; i < num_draws_; ++i) {
      if (!solve_draw(i, p.values(), ws)) {
        throw DrawError(i, "information matrix is singular or ill-conditioned");
      }
      out(static_cast<Eigen::Index>(i)) = std::log(ws.u(ws.u.size() - 1));
    }
    return out;
  }

  double psi(const DesignWeights& p) const {
    return detail::compensated_sum(lambdas(p)) / static_cast<double>(num_draws_);
  }

  // Monte Carlo standard error of Psi using the i.i.d. formula; conservative
  // for LHS draws.
  double standard_error(const DesignWeights& p) const {
    return detail::sample_standard_error(lambdas(p));
  }

  /// Psi at a raw weight vector; +infinity if any draw is unidentifiable.
  /// The vector need not lie exactly on the simplex.
  double try_psi(const Eigen::VectorXd& p) const {
    Workspace ws(config_.num_parameters());
    Eigen::VectorXd lam(static_cast<Eigen::Index>(num_draws_));
    for (std::size_t i = 0; i < num_draws_; ++i) {
      if (!solve_draw(i, p, ws)) return std::numeric_limits<double>::infinity();
      lam(static_cast<Eigen::Index>(i)) = std::log(ws.u(ws.u.size() - 1));
    }
    return detail::compensated_sum(lam) / static_cast<double>(num_draws_);
  }

  /// Psi and its gradient with respect to the raw weights.  With u = M^{-1} e
  /// and v = u_last, d Lambda / d p_s = -(u^T F_s u) / v.  Returns false when
  /// any draw is unidentifiable.
  bool psi_and_gradient(const Eigen::VectorXd& p, double& value,
                        Eigen::VectorXd& gradient) const {
    const int S = num_sequences();
    Workspace ws(config_.num_parameters());
    Eigen::VectorXd lam(static_cast<Eigen::Index>(num_draws_));
    Eigen::MatrixXd grad_terms(S, static_cast<Eigen::Index>(num_draws_));
    for (std::size_t i = 0; i < num_draws_; ++i) {
      if (!solve_draw(i, p, ws)) {
        value = std::numeric_limits<double>::infinity();
        return false;
      }
      const double v = ws.u(ws.u.size() - 1);
      lam(static_cast<Eigen::Index>(i)) = std::log(v);
      for (int s = 0; s < S; ++s) {
        grad_terms(s, static_cast<Eigen::Index>(i)) =
            -ws.u.dot(block(i, s + 2) * ws.u) / v;
      }
    }
    const double n = static_cast<double>(num_draws_);
    value = detail::compensated_sum(lam) / n;
    gradient.resize(S);
    for (int s = 0; s < S; ++s) {
      gradient(s) = detail::compensated_sum(grad_terms.row(s).transpose()) / n;
    }
    return true;
  }

 private:
  struct Workspace {
    explicit Workspace(int n) : info(n, n), llt(n), u(n) {}
    Eigen::MatrixXd info;
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::VectorXd u;
  };

  void assemble(std::size_t i, const Eigen::VectorXd& p, Eigen::MatrixXd& info) const {
    info.setZero();
    for (int s = 0; s < num_sequences(); ++s) {
      const double w = p(s);
      if (w == 0.0) continue;
      info.noalias() += w * block(i, s + 2);
    }
  }

  // Leaves u = M^{-1} e_last in the workspace.
  bool solve_draw(std::size_t i, const Eigen::VectorXd& p, Workspace& ws) const {
    assemble(i, p, ws.info);
    ws.llt.compute(ws.info);
    if (ws.llt.info() != Eigen::Success) return false;
    if (!(ws.llt.rcond() >= kMinReciprocalCondition)) return false;
    const Eigen::Index last = ws.info.rows() - 1;
    ws.u = Eigen::VectorXd::Unit(ws.info.rows(), last);
    ws.llt.solveInPlace(ws.u);
    return ws.u(last) > 0.0 && std::isfinite(ws.u(last));
  }

  CorrelationParams corr_;
  TrialConfig config_;
  std::uint64_t seed_;
  std::size_t num_draws_ = 0;
  std::vector<Eigen::MatrixXd> blocks_;
};

/// Fills sample.lambdas for design p and returns Psi.
inline double attach_lambdas(ObjectiveSample& sample, const DesignWeights& p,
                             const CorrelationParams& corr,
                             const TrialConfig& config) {
  PsiEvaluator eval(sample, corr, config);
  sample.lambdas = eval.lambdas(p);
  return detail::compensated_sum(*sample.lambdas) /
         static_cast<double>(sample.size());
}

/// One draw per row; a leading comment records the seed.  A trailing lambda
/// column is written when the sample carries cached values.
inline void write_sample(std::ostream& out, const ObjectiveSample& sample,
                         char delimiter = ',') {
  const Eigen::Index d = sample.draws.cols();
  out << "# seed=" << sample.seed << " draws=" << sample.size() << '\n';
  for (Eigen::Index k = 0; k + 1 < d; ++k) out << "beta_" << (k + 1) << delimiter;
  out << "delta";
  if (sample.lambdas) out << delimiter << "lambda";
  out << '\n';
  std::ostringstream row;
  row << std::setprecision(17);
  for (Eigen::Index i = 0; i < sample.draws.rows(); ++i) {
    row.str("");
    for (Eigen::Index k = 0; k < d; ++k) {
      if (k) row << delimiter;
      row << sample.draws(i, k);
    }
    if (sample.lambdas) row << delimiter << (*sample.lambdas)(i);
    out << row.str() << '\n';
  }
}

inline ObjectiveSample read_sample(std::istream& in, char delimiter = ',') {
  ObjectiveSample sample;
  std::string line;
  std::vector<std::vector<double>> rows;
  bool has_lambda = false;
  bool header_seen = false;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("seed=");
      if (pos != std::string::npos) {
        sample.seed = std::stoull(line.substr(pos + 5));
      }
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, delimiter)) fields.push_back(field);
    if (!header_seen) {
      header_seen = true;
      has_lambda = !fields.empty() && fields.back() == "lambda";
      width = fields.size();
      continue;
    }
    if (fields.size() != width) throw ConfigError("ragged sample row");
    std::vector<double> values;
    values.reserve(fields.size());
    for (const auto& f : fields) values.push_back(std::stod(f));
    rows.push_back(std::move(values));
  }
  if (!header_seen) throw ConfigError("sample file has no header");
  const Eigen::Index d = static_cast<Eigen::Index>(width) - (has_lambda ? 1 : 0);
  const auto n = static_cast<Eigen::Index>(rows.size());
  sample.draws.resize(n, d);
  if (has_lambda) sample.lambdas = Eigen::VectorXd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) sample.draws(i, k) = rows[i][k];
    if (has_lambda) (*sample.lambdas)(i) = rows[i][d];
  }
  return sample;
}

}  // namespace swopt

#endif  // SWOPT_SAMPLING_HPP
