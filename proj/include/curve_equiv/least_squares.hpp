#ifndef CURVE_EQUIV_LEAST_SQUARES_HPP
#define CURVE_EQUIV_LEAST_SQUARES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "curve_equiv/models.hpp"

namespace curve_equiv {

/// r(theta) and optionally J = dr/dtheta.  Objective is ||r||^2 + offset.
using ResidualFn = std::function<void(const Vector& theta, Vector& r, Matrix* jac)>;

struct LsqProblem {
  ResidualFn residuals;
  ParameterBox box;
  double offset = 0.0;
};

struct LsqOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-8;  // on max |dF/dtheta| relative to max(1, F)
  double step_tol = 1e-12;     // on ||step|| relative to 1 + ||theta||
  double initial_damping = 1e-3;
};

struct LsqResult {
  Vector theta;
  double objective = std::numeric_limits<double>::infinity();
  double gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// max |g_j| after zeroing components pinned against an active bound.
inline double projected_gradient_norm(const Vector& theta, const Vector& grad, const ParameterBox& box) {
  double m = 0.0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const bool at_lo = theta[j] <= box.lower[j] && grad[j] > 0.0;
    const bool at_hi = theta[j] >= box.upper[j] && grad[j] < 0.0;
    if (!at_lo && !at_hi) m = std::max(m, std::abs(grad[j]));
  }
  return m;
}

inline bool finite(const Vector& v) { return v.allFinite(); }

}  // namespace detail

namespace detail {

/// Damped Gauss-Newton (Levenberg-Marquardt, Marquardt scaling) with
/// projection onto the parameter box.  Coordinates pinned at a bound with an
/// outward gradient are frozen for the step.
inline LsqResult levenberg_marquardt(const LsqProblem& problem, Vector theta, const LsqOptions& opt = {}) {
  LsqResult res;
  const Eigen::Index p = theta.size();
  theta = problem.box.project(theta);

  Vector r;
  Matrix J;
  Vector r_try;
  auto objective = [&](const Vector& t, Vector& rr, Matrix* jj) -> double {
    try {
      problem.residuals(t, rr, jj);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::DomainError) return std::numeric_limits<double>::infinity();
      throw;
    }
    if (!detail::finite(rr) || (jj && !jj->allFinite())) return std::numeric_limits<double>::infinity();
    return rr.squaredNorm() + problem.offset;
  };

  double f = objective(theta, r, &J);
  res.theta = theta;
  res.objective = f;
  if (!std::isfinite(f)) return res;

  double lambda = opt.initial_damping;
  double nu = 2.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;
    const Vector grad = 2.0 * J.transpose() * r;
    const double gnorm = detail::projected_gradient_norm(theta, grad, problem.box);
    res.gradient_norm = gnorm;
    if (gnorm < opt.gradient_tol * std::max(1.0, f)) {
      res.converged = true;
      break;
    }

    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < p; ++j) {
      const bool at_lo = theta[j] <= problem.box.lower[j] && grad[j] > 0.0;
      const bool at_hi = theta[j] >= problem.box.upper[j] && grad[j] < 0.0;
      if (!at_lo && !at_hi) free.push_back(j);
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Matrix JtJ(nf, nf);
    Vector Jtr(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      Jtr[a] = J.col(free[a]).dot(r);
      for (Eigen::Index b = 0; b <= a; ++b) JtJ(a, b) = JtJ(b, a) = J.col(free[a]).dot(J.col(free[b]));
    }
    Vector diag = JtJ.diagonal().cwiseMax(1e-12 * std::max(1.0, JtJ.diagonal().maxCoeff()));

    bool accepted = false;
    while (!accepted) {
      Matrix A = JtJ;
      A.diagonal() += lambda * diag;
      Vector step_free = A.ldlt().solve(-Jtr);
      Vector trial = theta;
      for (Eigen::Index a = 0; a < nf; ++a) trial[free[a]] += step_free[a];
      trial = problem.box.project(trial);
      const Vector step = trial - theta;
      if (!step_free.allFinite() || step.norm() <= opt.step_tol * (1.0 + theta.norm())) {
        // Step has collapsed: nothing left to gain at this damping.
        res.converged = step_free.allFinite();
        res.theta = theta;
        res.objective = f;
        return res;
      }
      Matrix J_try;
      const double f_try = objective(trial, r_try, &J_try);
      // Gain ratio against the linear model prediction.
      const Vector Js = J * step;
      const double predicted = f - ((r + Js).squaredNorm() + problem.offset);
      const double rho = predicted > 0.0 ? (f - f_try) / predicted : -1.0;
      if (std::isfinite(f_try) && f_try < f && rho > 0.0) {
        theta = trial;
        r = r_try;
        J = J_try;
        f = f_try;
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
      } else if (std::isfinite(f_try) && f_try <= f && step.norm() <= 1e-10 * (1.0 + theta.norm())) {
        // Objective flat to rounding: treat as stationary.
        res.converged = true;
        res.theta = theta;
        res.objective = f;
        return res;
      } else {
        lambda *= nu;
        nu *= 2.0;
        if (lambda > 1e16) {
          res.theta = theta;
          res.objective = f;
          res.converged = gnorm < 1e-6 * std::max(1.0, f);
          return res;
        }
      }
    }
    res.theta = theta;
    res.objective = f;
  }
  res.theta = theta;
  res.objective = f;
  if (!res.converged) {
    const Vector grad = 2.0 * J.transpose() * r;
    res.gradient_norm = detail::projected_gradient_norm(theta, grad, problem.box);
    res.converged = res.gradient_norm < opt.gradient_tol * std::max(1.0, f);
  }
  return res;
}

}  // namespace detail

/// Levenberg-Marquardt followed by one undamped Gauss-Newton step from the
/// converged point, kept if it does not increase the objective.  The extra
/// step makes fits of models that are linear in theta exact to rounding.
inline LsqResult solve_least_squares(const LsqProblem& problem, Vector theta, const LsqOptions& opt = {}) {
  LsqResult res = detail::levenberg_marquardt(problem, std::move(theta), opt);
  if (!res.converged) return res;
  Vector r, r_try;
  Matrix J, J_try;
  try {
    problem.residuals(res.theta, r, &J);
    const Vector step = J.completeOrthogonalDecomposition().solve(-r);
    if (!step.allFinite()) return res;
    const Vector trial = problem.box.project(res.theta + step);
    problem.residuals(trial, r_try, nullptr);
    const double f_try = r_try.squaredNorm() + problem.offset;
    if (r_try.allFinite() && f_try <= res.objective) {
      res.theta = trial;
      res.objective = f_try;
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DomainError) throw;
  }
  return res;
}

/// Halton point `index` (1-based) in dimension `dim` (bases 2, 3, 5, ...).
inline double halton(std::uint64_t index, int dim) {
  static constexpr int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  const int base = primes[dim % 16];
  double f = 1.0;
  double r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

/// Quasi-random starting points covering the box.  Coordinates with a positive
/// lower bound spanning more than two decades are spread on a log scale.
inline std::vector<Vector> quasi_random_starts(const ParameterBox& box, int count, std::uint64_t offset = 0) {
  std::vector<Vector> starts;
  starts.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    Vector b(box.size());
    for (Eigen::Index j = 0; j < box.size(); ++j) {
      const double u = halton(offset + static_cast<std::uint64_t>(s) + 1, static_cast<int>(j));
      const double lo = box.lower[j];
      const double hi = box.upper[j];
      if (lo > 0.0 && hi / lo > 100.0) {
        b[j] = std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)));
      } else {
        b[j] = lo + u * (hi - lo);
      }
    }
    starts.push_back(std::move(b));
  }
  return starts;
}

/// Strict weak order used for deterministic tie-breaking.
inline bool lexicographic_less(const Vector& a, const Vector& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_LEAST_SQUARES_HPP
