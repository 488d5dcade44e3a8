#ifndef CURVE_EQUIV_FITTING_HPP
#define CURVE_EQUIV_FITTING_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curve_equiv/data.hpp"
#include "curve_equiv/errors.hpp"
#include "curve_equiv/least_squares.hpp"
#include "curve_equiv/models.hpp"

namespace curve_equiv {

/// Per-dose sufficient statistics.  The pooled SSR of a group is
/// sum_i [within_ss_i + n_i (mean_i - m(x_i, b))^2].
struct DoseSummary {
  std::vector<double> doses;
  std::vector<double> counts;
  std::vector<double> means;
  double within_ss = 0.0;
  std::size_t n = 0;

  explicit DoseSummary(const GroupSample& s) : n(s.n()) {
    for (std::size_t i = 0; i < s.k(); ++i) {
      const auto& ys = s.responses()[i];
      double mean = 0.0;
      for (double y : ys) mean += y;
      mean /= static_cast<double>(ys.size());
      double ss = 0.0;
      for (double y : ys) ss += (y - mean) * (y - mean);
      doses.push_back(s.doses()[i]);
      counts.push_back(static_cast<double>(ys.size()));
      means.push_back(mean);
      within_ss += ss;
    }
  }

  std::size_t k() const { return doses.size(); }
};

/// Fills r_i = sqrt(n_i) (mean_i - m(x_i, b)) and J = dr/db into the given
/// row/column block.
inline void group_residuals(const ModelSpec& spec, const DoseSummary& d, const Vector& b, Eigen::Ref<Vector> r,
                            Matrix* jac, Eigen::Index row0 = 0, Eigen::Index col0 = 0) {
  std::vector<double> g(static_cast<std::size_t>(spec.p));
  for (std::size_t i = 0; i < d.k(); ++i) {
    const double w = std::sqrt(d.counts[i]);
    r[static_cast<Eigen::Index>(i)] = w * (d.means[i] - eval_model(spec, d.doses[i], b));
    if (jac) {
      eval_gradient(spec, d.doses[i], b, g);
      for (int j = 0; j < spec.p; ++j) (*jac)(row0 + static_cast<Eigen::Index>(i), col0 + j) = -w * g[static_cast<std::size_t>(j)];
    }
  }
}

inline double group_ssr(const ModelSpec& spec, const DoseSummary& d, const Vector& b) {
  double s = d.within_ss;
  for (std::size_t i = 0; i < d.k(); ++i) {
    const double e = d.means[i] - eval_model(spec, d.doses[i], b);
    s += d.counts[i] * e * e;
  }
  return s;
}

struct FitOptions {
  std::vector<Vector> starts;  // user-supplied, tried first
  int quasi_random_starts = 10;
  std::uint64_t start_offset = 0;  // shifts the Halton sequence (used for retries)
  bool compute_information = true;
  double condition_limit = 1e12;
  LsqOptions lsq{};
};

/// Result of an unconstrained OLS fit of one group.
struct FitResult {
  ModelPtr model;
  Vector beta_hat;
  double sigma2_hat = 0.0;  // ssr / n
  Matrix Sigma_hat;         // (1/sigma2) sum_i zeta_i g_i g_i^T
  Matrix Sigma_hat_inv;     // sigma2 * (sum_i zeta_i g_i g_i^T)^{-1}
  double condition_number = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
  double ssr = 0.0;
  bool converged = false;
  int n_starts_used = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline void attach_information(FitResult& fit, const DoseSummary& d, double condition_limit) {
  const ModelSpec& spec = *fit.model;
  Matrix M = Matrix::Zero(spec.p, spec.p);
  Vector g(spec.p);
  for (std::size_t i = 0; i < d.k(); ++i) {
    eval_gradient(spec, d.doses[i], fit.beta_hat, std::span<double>(g.data(), static_cast<std::size_t>(spec.p)));
    M.noalias() += (d.counts[i] / static_cast<double>(d.n)) * g * g.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  fit.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(fit.condition_number < condition_limit)) {
    throw Error(ErrorKind::SingularInformation, "information matrix of model '" + spec.id +
                                                    "' is singular or ill-conditioned (condition number " +
                                                    std::to_string(fit.condition_number) + ")");
  }
  fit.Sigma_hat = M / fit.sigma2_hat;
  fit.Sigma_hat_inv = fit.sigma2_hat * eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                      eig.eigenvectors().transpose();
}

}  // namespace detail

/// Multi-start OLS fit of `spec` to one group.  The best SSR over all starts
/// wins; near-ties (|dSSR| < 1e-12) go to the lexicographically smallest
/// parameter vector.
inline FitResult fit_ols(const ModelPtr& model, const GroupSample& sample, const FitOptions& opt = {}) {
  const ModelSpec& spec = *model;
  const DoseSummary d(sample);

  FitResult best;
  best.model = model;
  best.n = d.n;
  if (d.n < static_cast<std::size_t>(spec.p)) {
    best.warnings.push_back("n < p: parameters are not identifiable");
  }
  if (d.k() < static_cast<std::size_t>(spec.p)) {
    best.warnings.push_back("fewer dose levels than parameters");
  }

  LsqProblem problem;
  problem.box = spec.box;
  problem.offset = d.within_ss;
  problem.residuals = [&](const Vector& b, Vector& r, Matrix* J) {
    r.resize(static_cast<Eigen::Index>(d.k()));
    if (J) J->resize(static_cast<Eigen::Index>(d.k()), spec.p);
    group_residuals(spec, d, b, r, J);
  };

  std::vector<Vector> starts = opt.starts;
  for (auto& s : quasi_random_starts(spec.box, opt.quasi_random_starts, opt.start_offset)) starts.push_back(std::move(s));

  bool have = false;
  LsqResult winner;
  for (const auto& start : starts) {
    if (start.size() != spec.p) throw Error(ErrorKind::DimensionMismatch, "start vector has wrong length");
    ++best.n_starts_used;
    LsqResult r = solve_least_squares(problem, start, opt.lsq);
    if (!r.converged || !std::isfinite(r.objective)) continue;
    if (!have || r.objective < winner.objective - 1e-12 ||
        (std::abs(r.objective - winner.objective) <= 1e-12 && lexicographic_less(r.theta, winner.theta))) {
      winner = std::move(r);
      have = true;
    }
  }
  if (!have) {
    throw Error(ErrorKind::NonConvergence,
                "no start reached the gradient tolerance for model '" + spec.id + "'");
  }
  best.beta_hat = winner.theta;
  best.ssr = winner.objective;
  best.sigma2_hat = best.ssr / static_cast<double>(d.n);
  best.converged = true;
  if (opt.compute_information) detail::attach_information(best, d, opt.condition_limit);
  return best;
}

/// Two fitted groups plus the covariate region and allocation ratio n / n1.
struct PairedFit {
  FitResult fit1;
  FitResult fit2;
  Interval region;
  double lambda = 2.0;
  std::size_t n = 0;
};

inline PairedFit pair_fits(FitResult fit1, FitResult fit2, Interval region) {
  if (fit2.n == 0 || fit1.n == 0) throw Error(ErrorKind::DegenerateAllocation, "both groups need at least one observation");
  if (!fit1.converged || !fit2.converged) throw Error(ErrorKind::NonConvergence, "pair_fits needs converged fits");
  PairedFit pf;
  pf.n = fit1.n + fit2.n;
  pf.lambda = static_cast<double>(pf.n) / static_cast<double>(fit1.n);
  pf.fit1 = std::move(fit1);
  pf.fit2 = std::move(fit2);
  pf.region = region;
  return pf;
}

/// A PairedFit for known parameters (no data); Sigma matrices are left empty.
inline PairedFit curves_only(const ModelPtr& m1, const Vector& b1, const ModelPtr& m2, const Vector& b2, Interval region) {
  PairedFit pf;
  pf.fit1.model = m1;
  pf.fit1.beta_hat = b1;
  pf.fit1.converged = true;
  pf.fit2.model = m2;
  pf.fit2.beta_hat = b2;
  pf.fit2.converged = true;
  pf.region = region;
  return pf;
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_FITTING_HPP
