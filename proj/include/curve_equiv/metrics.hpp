#ifndef CURVE_EQUIV_METRICS_HPP
#define CURVE_EQUIV_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "curve_equiv/errors.hpp"
#include "curve_equiv/fitting.hpp"
#include "curve_equiv/normal.hpp"
#include "curve_equiv/quadrature.hpp"

namespace curve_equiv {

enum class Distance { L2SQ, SUP };

inline std::string_view to_string(Distance d) { return d == Distance::L2SQ ? "L2SQ" : "SUP"; }

/// m1(x, b1) - m2(x, b2) at the fitted parameters.
inline double diff_profile(const PairedFit& pf, double x) {
  return eval_model(*pf.fit1.model, x, pf.fit1.beta_hat) - eval_model(*pf.fit2.model, x, pf.fit2.beta_hat);
}

/// Squared L2 distance: sum_q w_q Delta(x_q)^2.
inline double dist_l2sq(const PairedFit& pf, const QuadratureRule& quad) {
  return quad.integrate([&](double x) {
    const double d = diff_profile(pf, x);
    return d * d;
  });
}

struct SupOptions {
  int grid_n = 2001;
  double tol_rel = 1e-3;
  double refine_width = 1e-10;
};

struct SupResult {
  double value = 0.0;
  std::vector<double> extremal_points;
  std::vector<int> signs;  // +1 where Delta = +value, -1 where Delta = -value
  bool plateau = false;
  double argmax = 0.0;  // global maximiser after refinement

  bool unique() const { return !plateau && extremal_points.size() == 1; }
};

namespace detail {

/// Golden-section maximisation of f on [a, b] down to bracket width `width`.
template <class F>
std::pair<double, double> golden_max(F&& f, double a, double b, double width) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > width) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

}  // namespace detail

/// Maximal absolute deviation by dense grid scan plus golden-section refinement
/// of every grid-local maximum.  Runs of three or more grid points that are
/// flat at the maximum are reported by their endpoints with `plateau` set.
inline SupResult dist_sup(const PairedFit& pf, const SupOptions& opt = {}) {
  if (opt.grid_n < 2) throw Error(ErrorKind::InvalidArgument, "grid_n must be >= 2");
  const Interval R = pf.region;
  const auto N = static_cast<std::size_t>(opt.grid_n);
  const double h = R.length() / static_cast<double>(N - 1);
  std::vector<double> xs(N);
  std::vector<double> a(N);
  for (std::size_t j = 0; j < N; ++j) {
    xs[j] = (j + 1 == N) ? R.hi : R.lo + h * static_cast<double>(j);
    a[j] = std::abs(diff_profile(pf, xs[j]));
  }
  const double grid_max = *std::max_element(a.begin(), a.end());
  const double flat_tol = 1e-12 * std::max(1.0, grid_max);

  struct Candidate {
    double x;
    double value;
    bool plateau_end;
  };
  std::vector<Candidate> cands;
  bool plateau = false;
  auto absdiff = [&](double x) { return std::abs(diff_profile(pf, x)); };

  std::size_t j = 0;
  while (j < N) {
    // extent of the flat run starting at j
    std::size_t e = j;
    while (e + 1 < N && std::abs(a[e + 1] - a[j]) <= flat_tol) ++e;
    const bool left_ok = j == 0 || a[j - 1] <= a[j];
    const bool right_ok = e + 1 == N || a[e + 1] <= a[j];
    if (left_ok && right_ok) {
      if (e - j + 1 >= 3) {
        cands.push_back({xs[j], a[j], true});
        cands.push_back({xs[e], a[e], true});
        if (a[j] >= grid_max - flat_tol) plateau = true;
      } else {
        for (std::size_t m = j; m <= e; ++m) {
          const double lo = m == 0 ? xs[0] : xs[m - 1];
          const double hi = m + 1 == N ? xs[N - 1] : xs[m + 1];
          auto [xr, vr] = detail::golden_max(absdiff, lo, hi, opt.refine_width);
          if (vr >= a[m]) {
            cands.push_back({xr, vr, false});
          } else {
            cands.push_back({xs[m], a[m], false});
          }
        }
      }
    }
    j = e + 1;
  }

  SupResult out;
  for (const auto& c : cands) out.value = std::max(out.value, c.value);
  double best = -1.0;
  std::vector<std::pair<double, bool>> pts;
  for (const auto& c : cands) {
    if (c.value >= (1.0 - opt.tol_rel) * out.value) pts.emplace_back(c.x, c.plateau_end);
    if (c.value > best) {
      best = c.value;
      out.argmax = c.x;
    }
  }
  std::sort(pts.begin(), pts.end());
  // merge refined maxima that collapsed onto the same point
  for (const auto& [x, plat] : pts) {
    if (!out.extremal_points.empty() && std::abs(x - out.extremal_points.back()) <= 1e-7 * std::max(1.0, R.length())) continue;
    out.extremal_points.push_back(x);
    out.signs.push_back(diff_profile(pf, x) >= 0.0 ? 1 : -1);
  }
  out.plateau = plateau;
  return out;
}

inline double distance_value(const PairedFit& pf, Distance d, const QuadratureRule& quad, const SupOptions& sup = {}) {
  return d == Distance::L2SQ ? dist_l2sq(pf, quad) : dist_sup(pf, sup).value;
}

namespace detail {

inline void require_information(const PairedFit& pf) {
  if (pf.fit1.Sigma_hat_inv.size() == 0 || pf.fit2.Sigma_hat_inv.size() == 0) {
    throw Error(ErrorKind::SingularInformation, "paired fit carries no information matrices");
  }
}

}  // namespace detail

/// Covariance kernel lambda g1(x)' S1^-1 g1(y) + lambda/(lambda-1) g2(x)' S2^-1 g2(y).
inline double kernel_k(const PairedFit& pf, double x, double y) {
  detail::require_information(pf);
  const double l = pf.lambda;
  const Vector g1x = eval_gradient(*pf.fit1.model, x, pf.fit1.beta_hat);
  const Vector g1y = eval_gradient(*pf.fit1.model, y, pf.fit1.beta_hat);
  const Vector g2x = eval_gradient(*pf.fit2.model, x, pf.fit2.beta_hat);
  const Vector g2y = eval_gradient(*pf.fit2.model, y, pf.fit2.beta_hat);
  return l * g1x.dot(pf.fit1.Sigma_hat_inv * g1y) + l / (l - 1.0) * g2x.dot(pf.fit2.Sigma_hat_inv * g2y);
}

/// Asymptotic variance of sqrt(n)(d2_hat - d2): 4 * double integral of
/// Delta(x) Delta(y) k(x, y).  The kernel is a sum of two bilinear forms, so
/// the tensor-rule double sum factorises into two p-vectors per group.
inline double var_l2(const PairedFit& pf, const QuadratureRule& quad) {
  detail::require_information(pf);
  Vector a1 = Vector::Zero(pf.fit1.model->p);
  Vector a2 = Vector::Zero(pf.fit2.model->p);
  for (std::size_t q = 0; q < quad.nodes.size(); ++q) {
    const double x = quad.nodes[q];
    const double wd = quad.weights[q] * diff_profile(pf, x);
    a1 += wd * eval_gradient(*pf.fit1.model, x, pf.fit1.beta_hat);
    a2 += wd * eval_gradient(*pf.fit2.model, x, pf.fit2.beta_hat);
  }
  const double l = pf.lambda;
  return 4.0 * (l * a1.dot(pf.fit1.Sigma_hat_inv * a1) + l / (l - 1.0) * a2.dot(pf.fit2.Sigma_hat_inv * a2));
}

/// Variance of the sup statistic when the extremal set is {x0}.
inline double var_sup_unique(const PairedFit& pf, double x0) { return kernel_k(pf, x0, x0); }

/// ||dm1/db1(x)|| + ||dm2/db2(x)||; positive values witness the continuity
/// condition for the sup-distance limit at x.
inline double gradient_condition(const PairedFit& pf, double x) {
  return eval_gradient(*pf.fit1.model, x, pf.fit1.beta_hat).norm() +
         eval_gradient(*pf.fit2.model, x, pf.fit2.beta_hat).norm();
}

/// tau^2(x) = sum_l (1/n_l) g_l(x)' S_l^-1 g_l(x).
inline double band_variance(const PairedFit& pf, double x) {
  detail::require_information(pf);
  const Vector g1 = eval_gradient(*pf.fit1.model, x, pf.fit1.beta_hat);
  const Vector g2 = eval_gradient(*pf.fit2.model, x, pf.fit2.beta_hat);
  return g1.dot(pf.fit1.Sigma_hat_inv * g1) / static_cast<double>(pf.fit1.n) +
         g2.dot(pf.fit2.Sigma_hat_inv * g2) / static_cast<double>(pf.fit2.n);
}

/// Pointwise band half-width z_{1-alpha} * tau(x).
inline double band_halfwidth(const PairedFit& pf, double x, double alpha) {
  if (!(alpha > 0.0 && alpha <= 0.5)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 0.5]");
  if (alpha == 0.5) return 0.0;
  return normal_quantile(1.0 - alpha) * std::sqrt(std::max(0.0, band_variance(pf, x)));
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_METRICS_HPP
