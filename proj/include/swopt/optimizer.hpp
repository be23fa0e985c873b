#ifndef SWOPT_OPTIMIZER_HPP
#define SWOPT_OPTIMIZER_HPP

// Minimisation of Psi over the allocation simplex.
//
// The local solver is a spectral projected gradient method (Barzilai-Borwein
// steps, Euclidean projection onto the simplex, nonmonotone Armijo line
// search) driven by the analytic gradient of Psi.  Psi is convex in p, so
// restarts only guard against stalls; the best restart is kept.  A lattice
// scan and a finite-difference first-order certificate serve as independent
// checks of the solver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swopt/comparators.hpp"
#include "swopt/design.hpp"
#include "swopt/errors.hpp"
#include "swopt/parallel.hpp"
#include "swopt/sampling.hpp"

namespace swopt {

struct OptimizeOptions {
  // Number of starting points: balanced, Lawrie-shaped, the warm start if
  // given, then flat Dirichlet draws.
  int restarts = 5;
  // Stop when the projected-gradient step ||P(p - g) - p||_inf falls below.
  double tolerance = 1e-8;
  int max_iterations = 5000;
  std::uint64_t restart_seed = 0x5eedULL;
  std::optional<Eigen::VectorXd> warm_start;
  double kkt_tolerance = 1e-6;
  double kkt_step = 1e-5;
  unsigned threads = 1;
};

struct KktCertificate {
  // Derivative of Psi along (vertex_s - p) for each sequence; NaN where Psi
  // is not finite near p.
  Eigen::VectorXd directional_derivatives;
  double min_derivative = std::numeric_limits<double>::quiet_NaN();
  double tolerance = 0.0;
  bool satisfied = false;
};

struct OptimizationResult {
  DesignWeights weights;
  double objective;
  int iterations = 0;        // iterations of the winning restart
  int total_iterations = 0;  // summed over restarts
  KktCertificate certificate;
  int restarts_used = 0;
  bool converged = false;
  std::vector<double> restart_objectives;
  std::vector<Eigen::VectorXd> restart_weights;
};

/// Euclidean projection onto {p >= 0, sum p = 1} (sort-based).
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cumulative += sorted[k];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - t > 0.0) shift = t;
  }
  Eigen::VectorXd p = (v.array() - shift).max(0.0).matrix();
  const double total = p.sum();
  return total > 0.0 ? Eigen::VectorXd(p / total)
                     : Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
}

/// Weights under `threshold` shown as exactly zero (summaries only).
inline Eigen::VectorXd display_weights(const DesignWeights& p,
                                       double threshold = 1e-6) {
  Eigen::VectorXd w = p.values();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) < threshold) w(i) = 0.0;
  }
  return w;
}

namespace detail {

struct LocalSolve {
  Eigen::VectorXd weights;
  double objective = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

inline double projected_gradient_norm(const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& g) {
  return (project_to_simplex(x - g) - x).lpNorm<Eigen::Infinity>();
}

inline LocalSolve spectral_projected_gradient(const PsiEvaluator& eval,
                                              const Eigen::VectorXd& start,
                                              const OptimizeOptions& options) {
  constexpr double kAlphaMin = 1e-10;
  constexpr double kAlphaMax = 1e10;
  constexpr double kArmijo = 1e-4;
  constexpr std::size_t kMemory = 10;

  LocalSolve out;
  Eigen::VectorXd x = project_to_simplex(start);
  Eigen::VectorXd g;
  double f;
  if (!eval.psi_and_gradient(x, f, g)) {
    out.weights = x;
    return out;
  }
  std::deque<double> recent{f};
  double alpha = 1.0 / std::max(projected_gradient_norm(x, g), 1e-12);
  alpha = std::clamp(alpha, kAlphaMin, kAlphaMax);

  Eigen::VectorXd x_new, g_new;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (projected_gradient_norm(x, g) <= options.tolerance) {
      out.converged = true;
      break;
    }
    const Eigen::VectorXd d = project_to_simplex(x - alpha * g) - x;
    const double slope = g.dot(d);
    const double f_ref = *std::max_element(recent.begin(), recent.end());
    double lambda = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    while (lambda > 1e-16) {
      x_new = (x + lambda * d).cwiseMax(0.0);
      x_new /= x_new.sum();
      const bool ok = eval.psi_and_gradient(x_new, f_new, g_new);
      if (ok && f_new <= f_ref + kArmijo * lambda * slope) {
        accepted = true;
        break;
      }
      double next = 0.5 * lambda;
      if (ok) {
        // Safeguarded quadratic interpolation along d.
        const double curvature = f_new - f - lambda * slope;
        if (curvature > 0.0) {
          const double trial = -0.5 * lambda * lambda * slope / curvature;
          if (trial >= 0.1 * lambda && trial <= 0.9 * lambda) next = trial;
        }
      }
      lambda = next;
    }
    if (!accepted) {
      // Line search exhausted: rounding noise dominates the decrease.
      out.converged = projected_gradient_norm(x, g) <= 1e3 * options.tolerance;
      break;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sty = s.dot(y);
    alpha = sty > 0.0 ? std::clamp(s.squaredNorm() / sty, kAlphaMin, kAlphaMax)
                      : kAlphaMax;
    x = x_new;
    g = g_new;
    f = f_new;
    recent.push_back(f);
    if (recent.size() > kMemory) recent.pop_front();
  }
  out.weights = x;
  out.objective = f;
  out.iterations = it;
  return out;
}

}  // namespace detail

/// Directional derivatives of Psi from p toward every vertex design, by
/// finite differences along the feasible direction (vertex_s - p).  Central
/// differences are used when the backward point stays on the simplex,
/// otherwise a second-order one-sided formula.
inline KktCertificate certify_kkt(const DesignWeights& p,
                                  const PsiEvaluator& eval,
                                  double tolerance = 1e-6, double step = 1e-5) {
  p.check_against(eval.config());
  const Eigen::Index S = p.size();
  KktCertificate cert;
  cert.tolerance = tolerance;
  cert.directional_derivatives.resize(S);
  const Eigen::VectorXd& x = p.values();
  const double f0 = eval.try_psi(x);
  bool all_finite = true;
  for (Eigen::Index s = 0; s < S; ++s) {
    Eigen::VectorXd d = -x;
    d(s) += 1.0;
    double deriv;
    if (d.lpNorm<Eigen::Infinity>() == 0.0) {
      deriv = 0.0;
    } else if (x(s) >= step / (1.0 + step)) {
      const double fp = eval.try_psi(x + step * d);
      const double fm = eval.try_psi(x - step * d);
      deriv = (fp - fm) / (2.0 * step);
    } else {
      const double f1 = eval.try_psi(x + step * d);
      const double f2 = eval.try_psi(x + 2.0 * step * d);
      deriv = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * step);
    }
    if (!std::isfinite(deriv)) {
      deriv = std::numeric_limits<double>::quiet_NaN();
      all_finite = false;
    }
    cert.directional_derivatives(s) = deriv;
  }
  if (all_finite) {
    cert.min_derivative = cert.directional_derivatives.minCoeff();
    cert.satisfied = cert.min_derivative >= -tolerance;
  }
  return cert;
}

/// Bayesian D_A-optimal allocation over the draws cached in `eval`.
inline OptimizationResult optimize_design(const PsiEvaluator& eval,
                                          const OptimizeOptions& options = {}) {
  if (options.restarts < 1) throw ConfigError("restarts must be at least 1");
  if (options.max_iterations < 1) {
    throw ConfigError("max_iterations must be at least 1");
  }
  if (!(options.tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  const TrialConfig& config = eval.config();
  const int S = config.num_sequences();

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(balanced_design(config).values());
  if (static_cast<int>(starts.size()) < options.restarts) {
    starts.push_back(lawrie_design(config, eval.correlation().alpha0).values());
  }
  if (options.warm_start && static_cast<int>(starts.size()) < options.restarts) {
    if (options.warm_start->size() != S) {
      throw ConfigError("warm start has the wrong number of weights");
    }
    starts.push_back(*options.warm_start);
  }
  std::mt19937_64 gen(options.restart_seed);
  while (static_cast<int>(starts.size()) < options.restarts) {
    starts.push_back(rng::dirichlet(gen, S));
  }

  std::vector<detail::LocalSolve> runs(starts.size());
  parallel_for(starts.size(), options.threads, [&](std::size_t i) {
    runs[i] = detail::spectral_projected_gradient(eval, starts[i], options);
  });

  // Lowest objective wins; ties go to the earlier start.
  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].objective < runs[best].objective) best = i;
  }
  if (!std::isfinite(runs[best].objective)) {
    throw UnidentifiableDesign("no restart reached an identifiable design");
  }

  OptimizationResult result{DesignWeights(runs[best].weights, 1e-8),
                            runs[best].objective, 0, 0, {}, 0, false, {}, {}};
  result.iterations = runs[best].iterations;
  result.converged = runs[best].converged;
  result.restarts_used = static_cast<int>(runs.size());
  for (const auto& r : runs) {
    result.total_iterations += r.iterations;
    result.restart_objectives.push_back(r.objective);
    result.restart_weights.push_back(r.weights);
  }
  result.objective = eval.psi(result.weights);
  result.certificate = certify_kkt(result.weights, eval, options.kkt_tolerance,
                                   options.kkt_step);
  return result;
}

inline OptimizationResult optimize_design(const ObjectiveSample& sample,
                                          const CorrelationParams& corr,
                                          const TrialConfig& config,
                                          const OptimizeOptions& options = {}) {
  return optimize_design(PsiEvaluator(sample, corr, config), options);
}

/// Number of points on {k in N^parts : sum k = m}, i.e. C(m+parts-1, parts-1).
inline double lattice_size(int m, int parts) {
  double count = 1.0;
  for (int i = 1; i < parts; ++i) {
    count = count * static_cast<double>(m + i) / static_cast<double>(i);
  }
  return std::round(count);
}

inline constexpr double kMaxLatticePoints = 1e7;

struct GridOracleResult {
  DesignWeights weights;
  double objective;
  std::size_t points = 0;
};

/// Exhaustive scan of Psi over the lattice {p : p_s = k_s/m, sum k_s = m}.
/// Points are visited in increasing lexicographic order and only a strict
/// improvement replaces the incumbent, so ties resolve to the
/// lexicographically smallest weight vector.  Unidentifiable lattice points
/// are skipped.
inline GridOracleResult grid_oracle(const PsiEvaluator& eval, int resolution,
                                    unsigned threads = 1) {
  if (resolution < 1) throw ConfigError("oracle resolution must be positive");
  const int S = eval.num_sequences();
  const double total = lattice_size(resolution, S);
  if (total > kMaxLatticePoints) {
    throw OracleGuardError("lattice oracle would scan " +
                           std::to_string(static_cast<long long>(total)) +
                           " points for " + std::to_string(S) +
                           " sequences at resolution " +
                           std::to_string(resolution) + " (limit 1e7)");
  }
  constexpr std::size_t kChunk = 4096;
  std::vector<int> k(static_cast<std::size_t>(S), 0);
  k.back() = resolution;
  bool more = true;
  auto advance = [&] {
    // Rightmost i < S-1 whose suffix after i has a positive sum.
    int i = S - 2;
    int suffix = k[static_cast<std::size_t>(S - 1)];
    while (i >= 0 && suffix == 0) {
      suffix += k[static_cast<std::size_t>(i)];
      --i;
    }
    if (i < 0) return false;
    k[static_cast<std::size_t>(i)] += 1;
    for (int j = i + 1; j < S - 1; ++j) k[static_cast<std::size_t>(j)] = 0;
    k[static_cast<std::size_t>(S - 1)] = suffix - 1;
    return true;
  };

  std::optional<Eigen::VectorXd> best_p;
  double best = std::numeric_limits<double>::infinity();
  std::size_t visited = 0;
  std::vector<Eigen::VectorXd> chunk;
  std::vector<double> values;
  while (more) {
    chunk.clear();
    while (more && chunk.size() < kChunk) {
      Eigen::VectorXd p(S);
      for (int s = 0; s < S; ++s) {
        p(s) = static_cast<double>(k[static_cast<std::size_t>(s)]) / resolution;
      }
      chunk.push_back(std::move(p));
      more = advance();
    }
    values.assign(chunk.size(), 0.0);
    parallel_for(chunk.size(), threads,
                 [&](std::size_t i) { values[i] = eval.try_psi(chunk[i]); });
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (values[i] < best) {
        best = values[i];
        best_p = chunk[i];
      }
    }
    visited += chunk.size();
  }
  if (!best_p) {
    throw UnidentifiableDesign("every lattice point at resolution " +
                               std::to_string(resolution) +
                               " is unidentifiable");
  }
  return {DesignWeights(*best_p, 1e-12), best, visited};
}

}  // namespace swopt

#endif  // SWOPT_OPTIMIZER_HPP
