#ifndef CURVE_EQUIV_CONSTRAIN_HPP
#define CURVE_EQUIV_CONSTRAIN_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "curve_equiv/errors.hpp"
#include "curve_equiv/fitting.hpp"
#include "curve_equiv/least_squares.hpp"
#include "curve_equiv/metrics.hpp"

namespace curve_equiv {

/// OLS fit of both groups on the manifold d(b1, b2) = eps.
struct ConstrainedFit {
  Vector beta1_tilde;
  Vector beta2_tilde;
  double constraint_residual = std::numeric_limits<double>::infinity();
  double objective = std::numeric_limits<double>::infinity();  // pooled SSR
  double distance = 0.0;
  bool converged = false;
  bool used_constrained = true;
  int seeds_tried = 0;
};

struct ConstrainOptions {
  double feasibility_tol = 1e-6;  // scaled by max(1, eps)
  double mu_initial = 1.0;
  double mu_factor = 10.0;
  double mu_max = 1e8;
  int max_outer = 60;
  int soft_grid_n = 201;
  std::vector<double> temperatures{10.0, 1e2, 1e3, 1e4};
  SupOptions sup{};
  int quadrature_order = 64;
  LsqOptions lsq{};
};

namespace detail {

/// Everything needed to evaluate the stacked two-group problem.
struct PairProblem {
  ModelPtr m1;
  ModelPtr m2;
  DoseSummary d1;
  DoseSummary d2;
  Interval region;
  Distance distance;
  double eps;
  QuadratureRule quad;
  std::vector<double> soft_grid;

  int p1() const { return m1->p; }
  int p2() const { return m2->p; }
  Eigen::Index dim() const { return p1() + p2(); }
  Eigen::Index k1() const { return static_cast<Eigen::Index>(d1.k()); }
  Eigen::Index k2() const { return static_cast<Eigen::Index>(d2.k()); }

  Vector stack(const Vector& b1, const Vector& b2) const {
    Vector t(dim());
    t << b1, b2;
    return t;
  }
  Vector first(const Vector& t) const { return t.head(p1()); }
  Vector second(const Vector& t) const { return t.tail(p2()); }

  ParameterBox box() const {
    return {stack(m1->box.lower, m2->box.lower), stack(m1->box.upper, m2->box.upper)};
  }

  double ssr(const Vector& t) const { return group_ssr(*m1, d1, first(t)) + group_ssr(*m2, d2, second(t)); }

  PairedFit curves(const Vector& t) const { return curves_only(m1, first(t), m2, second(t), region); }

  /// Exact distance: Gauss-Legendre for L2SQ, refined grid maximum for SUP.
  double exact_distance(const Vector& t) const {
    const PairedFit pf = curves(t);
    return distance == Distance::L2SQ ? dist_l2sq(pf, quad) : dist_sup(pf, SupOptions{}).value;
  }

  /// Smooth constraint value d(t) - eps and its gradient.  For SUP the maximum
  /// is replaced by a log-sum-exp over +/-Delta on the soft grid at inverse
  /// temperature `temp`.
  double constraint(const Vector& t, double temp, Vector* grad) const {
    const Vector b1 = first(t);
    const Vector b2 = second(t);
    Vector g1(p1());
    Vector g2(p2());
    if (grad) grad->setZero(dim());
    if (distance == Distance::L2SQ) {
      double d = 0.0;
      for (std::size_t q = 0; q < quad.nodes.size(); ++q) {
        const double x = quad.nodes[q];
        const double delta = eval_model(*m1, x, b1) - eval_model(*m2, x, b2);
        d += quad.weights[q] * delta * delta;
        if (grad) {
          eval_gradient(*m1, x, b1, std::span<double>(g1.data(), static_cast<std::size_t>(p1())));
          eval_gradient(*m2, x, b2, std::span<double>(g2.data(), static_cast<std::size_t>(p2())));
          const double s = 2.0 * quad.weights[q] * delta;
          grad->head(p1()) += s * g1;
          grad->tail(p2()) -= s * g2;
        }
      }
      return d - eps;
    }
    std::vector<double> delta(soft_grid.size());
    double m = 0.0;
    for (std::size_t q = 0; q < soft_grid.size(); ++q) {
      delta[q] = eval_model(*m1, soft_grid[q], b1) - eval_model(*m2, soft_grid[q], b2);
      m = std::max(m, std::abs(delta[q]));
    }
    double z = 0.0;
    std::vector<double> wplus(soft_grid.size());
    std::vector<double> wminus(soft_grid.size());
    for (std::size_t q = 0; q < soft_grid.size(); ++q) {
      wplus[q] = std::exp(temp * (delta[q] - m));
      wminus[q] = std::exp(temp * (-delta[q] - m));
      z += wplus[q] + wminus[q];
    }
    const double soft = m + std::log(z) / temp;
    if (grad) {
      for (std::size_t q = 0; q < soft_grid.size(); ++q) {
        const double s = (wplus[q] - wminus[q]) / z;
        if (std::abs(s) < 1e-300) continue;
        const double x = soft_grid[q];
        eval_gradient(*m1, x, b1, std::span<double>(g1.data(), static_cast<std::size_t>(p1())));
        eval_gradient(*m2, x, b2, std::span<double>(g2.data(), static_cast<std::size_t>(p2())));
        grad->head(p1()) += s * g1;
        grad->tail(p2()) -= s * g2;
      }
    }
    return soft - eps;
  }

  /// Stacked residuals [r1; r2; sqrt(mu) (c + nu / (2 mu))].
  LsqProblem augmented(double mu, double nu, double temp) const {
    LsqProblem prob;
    prob.box = box();
    prob.offset = d1.within_ss + d2.within_ss - nu * nu / (4.0 * mu);
    prob.residuals = [this, mu, nu, temp](const Vector& t, Vector& r, Matrix* J) {
      const Eigen::Index rows = k1() + k2() + 1;
      r.resize(rows);
      if (J) J->setZero(rows, dim());
      group_residuals(*m1, d1, first(t), r.segment(0, k1()), J, 0, 0);
      group_residuals(*m2, d2, second(t), r.segment(k1(), k2()), J, k1(), p1());
      Vector cg;
      const double c = constraint(t, temp, J ? &cg : nullptr);
      const double sm = std::sqrt(mu);
      r[rows - 1] = sm * (c + nu / (2.0 * mu));
      if (J) J->row(rows - 1) = sm * cg.transpose();
    };
    return prob;
  }
};

/// Single-start fit of one group with its responses shifted by `shift`.
inline Vector shifted_fit(const ModelSpec& spec, DoseSummary d, double shift, const Vector& start, const LsqOptions& lsq) {
  for (double& m : d.means) m += shift;
  LsqProblem prob;
  prob.box = spec.box;
  prob.offset = d.within_ss;
  prob.residuals = [&](const Vector& b, Vector& r, Matrix* J) {
    r.resize(static_cast<Eigen::Index>(d.k()));
    if (J) J->resize(static_cast<Eigen::Index>(d.k()), spec.p);
    group_residuals(spec, d, b, r, J);
  };
  return solve_least_squares(prob, start, lsq).theta;
}

/// Moves along t(s) = base + s (target - base) until the exact distance equals
/// eps, by bracketing and bisection.  Returns nullopt if no bracket exists.
inline std::optional<Vector> restore_feasibility(const PairProblem& pp, const Vector& base, const Vector& target) {
  const ParameterBox box = pp.box();
  auto at = [&](double s) { return box.project(base + s * (target - base)); };
  auto g = [&](double s) {
    try {
      return pp.exact_distance(at(s)) - pp.eps;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::DomainError) return std::numeric_limits<double>::quiet_NaN();
      throw;
    }
  };
  double lo = 0.0;
  double glo = g(lo);
  if (!std::isfinite(glo)) return std::nullopt;
  if (glo == 0.0) return at(lo);
  double hi = 1.0;
  double ghi = g(hi);
  int expand = 0;
  while ((!std::isfinite(ghi) || (ghi > 0.0) == (glo > 0.0)) && expand < 12) {
    lo = hi;
    if (std::isfinite(ghi)) glo = ghi;
    hi *= 1.6;
    ghi = g(hi);
    ++expand;
  }
  if (!std::isfinite(ghi) || (ghi > 0.0) == (glo > 0.0)) return std::nullopt;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if (!std::isfinite(gm)) return std::nullopt;
    if ((gm > 0.0) == (glo > 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
      ghi = gm;
    }
  }
  return std::abs(glo) <= std::abs(ghi) ? at(lo) : at(hi);
}

struct SeedOutcome {
  Vector theta;
  double residual = std::numeric_limits<double>::infinity();
  double objective = std::numeric_limits<double>::infinity();
  bool solved = false;
};

inline SeedOutcome run_augmented_lagrangian(const PairProblem& pp, const Vector& seed, const Vector& unconstrained,
                                            const ConstrainOptions& opt) {
  const double tol = opt.feasibility_tol * std::max(1.0, pp.eps);
  const double scale = std::max(pp.eps, 1e-8);
  std::vector<double> temps;
  if (pp.distance == Distance::L2SQ) {
    temps = {1.0};
  } else {
    for (double t : opt.temperatures) temps.push_back(t / scale);
  }

  Vector theta = seed;
  bool any_solved = false;
  double nu = 0.0;
  for (double temp : temps) {
    double mu = opt.mu_initial;
    double c_prev = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < opt.max_outer; ++outer) {
      LsqResult r = solve_least_squares(pp.augmented(mu, nu, temp), theta, opt.lsq);
      if (!std::isfinite(r.objective)) break;
      any_solved = true;
      theta = r.theta;
      const double c = pp.constraint(theta, temp, nullptr);
      if (std::abs(c) <= tol) break;
      nu += 2.0 * mu * c;
      if (std::abs(c) > 0.25 * std::abs(c_prev)) {
        if (mu >= opt.mu_max) break;
        mu = std::min(mu * opt.mu_factor, opt.mu_max);
      }
      c_prev = c;
    }
  }

  SeedOutcome out;
  out.solved = any_solved;
  if (!any_solved) return out;
  double resid = std::abs(pp.exact_distance(theta) - pp.eps);
  if (resid > tol) {
    if (auto fixed = restore_feasibility(pp, unconstrained, theta)) {
      const double r2 = std::abs(pp.exact_distance(*fixed) - pp.eps);
      if (r2 < resid) {
        theta = *fixed;
        resid = r2;
      }
    }
  }
  out.theta = theta;
  out.residual = resid;
  out.objective = pp.ssr(theta);
  return out;
}

inline PairProblem make_pair_problem(const ModelPtr& m1, const ModelPtr& m2, const GroupSample& s1, const GroupSample& s2,
                                     double eps, Distance distance, const ConstrainOptions& opt) {
  const Interval region = s1.region();
  PairProblem pp{m1, m2, DoseSummary(s1), DoseSummary(s2), region, distance, eps,
                 gauss_legendre(opt.quadrature_order, region), {}};
  const int g = std::max(2, opt.soft_grid_n);
  pp.soft_grid.resize(static_cast<std::size_t>(g));
  for (int q = 0; q < g; ++q) pp.soft_grid[static_cast<std::size_t>(q)] = region.lo + region.length() * q / (g - 1.0);
  return pp;
}

}  // namespace detail

/// Minimises the pooled SSR of both groups subject to d(b1, b2) = eps.
/// Seeds: the unconstrained fits, and fits to data shifted apart by +/-h so
/// that both branches of the manifold (Delta > 0 and Delta < 0) are explored.
/// The lowest feasible objective wins; near-ties go to the lexicographically
/// smallest stacked parameter vector.
inline ConstrainedFit fit_constrained(const ModelPtr& m1, const ModelPtr& m2, const GroupSample& s1,
                                      const GroupSample& s2, double eps, Distance distance, const FitResult& warm1,
                                      const FitResult& warm2, const ConstrainOptions& opt = {}) {
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be positive");
  const auto pp = detail::make_pair_problem(m1, m2, s1, s2, eps, distance, opt);
  const double tol = opt.feasibility_tol * std::max(1.0, eps);

  const Vector unconstrained = pp.stack(warm1.beta_hat, warm2.beta_hat);
  const double h = distance == Distance::L2SQ ? std::sqrt(eps / pp.region.length()) : eps;
  std::vector<Vector> seeds{unconstrained};
  for (double sign : {1.0, -1.0}) {
    const Vector b1 = detail::shifted_fit(*m1, pp.d1, 0.5 * sign * h, warm1.beta_hat, opt.lsq);
    const Vector b2 = detail::shifted_fit(*m2, pp.d2, -0.5 * sign * h, warm2.beta_hat, opt.lsq);
    seeds.push_back(pp.stack(b1, b2));
  }

  ConstrainedFit best;
  bool any_solved = false;
  bool have = false;
  Vector best_theta;
  for (const auto& seed : seeds) {
    ++best.seeds_tried;
    const auto out = detail::run_augmented_lagrangian(pp, seed, unconstrained, opt);
    if (!out.solved) continue;
    any_solved = true;
    if (out.residual > tol) continue;
    const double slack = 1e-12 * std::max(1.0, out.objective);
    if (!have || out.objective < best.objective - slack ||
        (std::abs(out.objective - best.objective) <= slack && lexicographic_less(out.theta, best_theta))) {
      best_theta = out.theta;
      best.objective = out.objective;
      best.constraint_residual = out.residual;
      have = true;
    }
  }
  if (!any_solved) throw Error(ErrorKind::NonConvergence, "constrained fit failed from every seed");
  if (!have) {
    throw Error(ErrorKind::ConstraintInfeasible,
                "no iterate satisfies d = " + std::to_string(eps) + " within tolerance");
  }
  best.beta1_tilde = pp.first(best_theta);
  best.beta2_tilde = pp.second(best_theta);
  best.distance = pp.exact_distance(best_theta);
  best.converged = true;
  best.used_constrained = true;
  return best;
}

inline ConstrainedFit fit_constrained(const ModelPtr& m1, const ModelPtr& m2, const GroupSample& s1,
                                      const GroupSample& s2, double eps, Distance distance,
                                      const ConstrainOptions& opt = {}) {
  FitOptions fo;
  fo.compute_information = false;
  const FitResult w1 = fit_ols(m1, s1, fo);
  const FitResult w2 = fit_ols(m2, s2, fo);
  return fit_constrained(m1, m2, s1, s2, eps, distance, w1, w2, opt);
}

struct NullParameters {
  Vector beta1;
  Vector beta2;
  bool used_constrained = false;
};

/// Unconstrained estimates when d_hat >= eps, otherwise the constrained ones.
inline NullParameters select_null_params(const PairedFit& pf, double eps, double d_hat, const ConstrainedFit* cf) {
  if (d_hat >= eps) return {pf.fit1.beta_hat, pf.fit2.beta_hat, false};
  if (!cf) throw Error(ErrorKind::InvalidArgument, "d_hat < eps requires a solved constrained fit");
  return {cf->beta1_tilde, cf->beta2_tilde, true};
}

inline NullParameters select_null_params(const PairedFit& pf, double eps, Distance distance, const ConstrainedFit* cf,
                                         const QuadratureRule& quad, const SupOptions& sup = {}) {
  return select_null_params(pf, eps, distance_value(pf, distance, quad, sup), cf);
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_CONSTRAIN_HPP
