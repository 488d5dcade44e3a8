#ifndef CURVE_EQUIV_EQUIVALENCE_TESTS_HPP
#define CURVE_EQUIV_EQUIVALENCE_TESTS_HPP

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "curve_equiv/constrain.hpp"
#include "curve_equiv/data.hpp"
#include "curve_equiv/errors.hpp"
#include "curve_equiv/fitting.hpp"
#include "curve_equiv/metrics.hpp"
#include "curve_equiv/normal.hpp"
#include "curve_equiv/parallel.hpp"
#include "curve_equiv/rng.hpp"

namespace curve_equiv {

enum class Method { L2_ASYMPTOTIC, BOOT_L2, BOOT_SUP, SUP_ASYMPTOTIC, BAND_IU };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::L2_ASYMPTOTIC: return "L2_ASYMPTOTIC";
    case Method::BOOT_L2: return "BOOT_L2";
    case Method::BOOT_SUP: return "BOOT_SUP";
    case Method::SUP_ASYMPTOTIC: return "SUP_ASYMPTOTIC";
    case Method::BAND_IU: return "BAND_IU";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  for (Method m : {Method::L2_ASYMPTOTIC, Method::BOOT_L2, Method::BOOT_SUP, Method::SUP_ASYMPTOTIC, Method::BAND_IU}) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown method '" + std::string(s) + "'");
}

inline Distance method_distance(Method m) {
  return m == Method::L2_ASYMPTOTIC || m == Method::BOOT_L2 ? Distance::L2SQ : Distance::SUP;
}

struct TestOutcome {
  Method method = Method::L2_ASYMPTOTIC;
  double statistic = 0.0;
  double eps = 0.0;
  double alpha = 0.05;
  std::optional<double> critical_value;  // unset for BAND_IU
  std::optional<double> p_value;         // unset for BAND_IU
  bool reject = false;
  int B = 0;
  std::uint64_t seed = 0;
  nlohmann::json diagnostics = nlohmann::json::object();
};

inline void to_json(nlohmann::json& j, const TestOutcome& t) {
  j = nlohmann::json{{"method", to_string(t.method)},
                     {"statistic", t.statistic},
                     {"eps", t.eps},
                     {"alpha", t.alpha},
                     {"critical_value", t.critical_value ? nlohmann::json(*t.critical_value) : nlohmann::json()},
                     {"p_value", t.p_value ? nlohmann::json(*t.p_value) : nlohmann::json()},
                     {"reject", t.reject},
                     {"B", t.B},
                     {"seed", t.seed},
                     {"diagnostics", t.diagnostics}};
}

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 0.5)");
}

inline void check_eps(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw Error(ErrorKind::InvalidArgument, "eps must be positive and finite");
}

/// Shared asymptotic rule: reject if stat < eps + sd/sqrt(n) u_alpha.
inline void asymptotic_decision(TestOutcome& out, double sd, std::size_t n) {
  const double root_n = std::sqrt(static_cast<double>(n));
  out.diagnostics["sigma_hat"] = sd;
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    out.critical_value = out.eps;
    out.p_value = out.statistic >= out.eps ? 1.0 : 0.0;
    out.reject = false;
    out.diagnostics["degenerate_variance"] = true;
    return;
  }
  out.critical_value = out.eps + sd / root_n * normal_quantile(out.alpha);
  out.p_value = normal_cdf(root_n * (out.statistic - out.eps) / sd);
  out.reject = out.statistic < *out.critical_value;
}

}  // namespace detail

/// Asymptotic test on the squared L2 distance.
inline TestOutcome test_l2_asymptotic(const PairedFit& pf, double eps, double alpha, const QuadratureRule& quad) {
  detail::check_alpha(alpha);
  detail::check_eps(eps);
  TestOutcome out;
  out.method = Method::L2_ASYMPTOTIC;
  out.eps = eps;
  out.alpha = alpha;
  out.statistic = dist_l2sq(pf, quad);
  const double v = var_l2(pf, quad);
  out.diagnostics["var_l2"] = v;
  out.diagnostics["var_l2_over_n"] = v / static_cast<double>(pf.n);
  detail::asymptotic_decision(out, std::sqrt(std::max(0.0, v)), pf.n);
  return out;
}

/// Asymptotic sup test; needs a unique extremal point.
inline TestOutcome test_sup_asymptotic(const PairedFit& pf, double eps, double alpha, const SupOptions& sup = {}) {
  detail::check_alpha(alpha);
  detail::check_eps(eps);
  const SupResult sr = dist_sup(pf, sup);
  if (!sr.unique()) {
    throw Error(ErrorKind::NonUniqueExtremum,
                "maximal deviation is attained at " + std::to_string(sr.extremal_points.size()) +
                    (sr.plateau ? " points (plateau)" : " points") + "; use the bootstrap test instead");
  }
  TestOutcome out;
  out.method = Method::SUP_ASYMPTOTIC;
  out.eps = eps;
  out.alpha = alpha;
  out.statistic = sr.value;
  const double x0 = sr.extremal_points.front();
  const double v = var_sup_unique(pf, x0);
  out.diagnostics["x0"] = x0;
  out.diagnostics["gradient_condition"] = gradient_condition(pf, x0);
  out.diagnostics["var_sup"] = v;
  detail::asymptotic_decision(out, std::sqrt(std::max(0.0, v)), pf.n);
  return out;
}

/// Pointwise band Delta_hat(x) -/+ z_{1-alpha} tau(x) on a uniform grid.
struct BandProfile {
  std::vector<double> x;
  std::vector<double> delta;
  std::vector<double> lower;
  std::vector<double> upper;
};

inline BandProfile band_profile(const PairedFit& pf, double alpha, int grid_n) {
  if (grid_n < 2) throw Error(ErrorKind::InvalidArgument, "grid must have at least 2 points");
  if (!(alpha > 0.0 && alpha <= 0.5)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 0.5]");
  detail::require_information(pf);
  const double z = alpha == 0.5 ? 0.0 : normal_quantile(1.0 - alpha);
  BandProfile b;
  const auto N = static_cast<std::size_t>(grid_n);
  const double h = pf.region.length() / static_cast<double>(N - 1);
  for (std::size_t j = 0; j < N; ++j) {
    const double x = j + 1 == N ? pf.region.hi : pf.region.lo + h * static_cast<double>(j);
    const double d = diff_profile(pf, x);
    const double hw = z * std::sqrt(std::max(0.0, band_variance(pf, x)));
    b.x.push_back(x);
    b.delta.push_back(d);
    b.lower.push_back(d - hw);
    b.upper.push_back(d + hw);
  }
  return b;
}

/// Intersection-union rule: equivalence iff the whole band lies in (-eps, eps).
/// Instead of a p-value the diagnostics carry the smallest rejecting eps.
inline TestOutcome test_band_iu(const PairedFit& pf, double eps, double alpha, const SupOptions& sup = {}) {
  detail::check_alpha(alpha);
  detail::check_eps(eps);
  const BandProfile b = band_profile(pf, alpha, sup.grid_n);
  const double U = *std::max_element(b.upper.begin(), b.upper.end());
  const double L = *std::min_element(b.lower.begin(), b.lower.end());
  TestOutcome out;
  out.method = Method::BAND_IU;
  out.eps = eps;
  out.alpha = alpha;
  out.statistic = dist_sup(pf, sup).value;
  out.reject = U < eps && L > -eps;
  out.diagnostics["upper_max"] = U;
  out.diagnostics["lower_min"] = L;
  out.diagnostics["equivalence_margin"] = std::max(U, -L);
  return out;
}

/// The floor(B alpha)-th order statistic (1-based), index clamped to 1.
inline double bootstrap_quantile(const std::vector<double>& sorted_stats, double alpha) {
  if (sorted_stats.empty()) throw Error(ErrorKind::EmptyStats, "no bootstrap statistics");
  detail::check_alpha(alpha);
  const auto B = static_cast<double>(sorted_stats.size());
  const auto idx = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(B * alpha)));
  return sorted_stats[idx - 1];
}

struct BootstrapOptions {
  int B = 300;
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<Vector> starts1;  // extra starts for the fits to the observed data
  std::vector<Vector> starts2;
  int refit_random_starts = 10;
  double max_drop_fraction = 0.05;
  ConstrainOptions constrain{};
  SupOptions sup{};
  int quadrature_order = 64;
};

/// Null-generated bootstrap distribution of the distance statistic.  One run
/// serves every alpha.
struct BootstrapDistribution {
  Distance distance = Distance::L2SQ;
  double eps = 0.0;
  double statistic = 0.0;
  std::vector<double> sorted_stats;
  int requested = 0;
  int dropped = 0;
  int retried = 0;
  bool used_constrained = false;
  Vector null_beta1;
  Vector null_beta2;
  double null_distance = 0.0;
  double sigma2_1 = 0.0;
  double sigma2_2 = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline FitResult bootstrap_refit(const ModelPtr& m, const GroupSample& s, const Vector& start, int random_starts,
                                 std::uint64_t offset) {
  FitOptions fo;
  fo.starts = {start};
  fo.quasi_random_starts = random_starts;
  fo.start_offset = offset;
  fo.compute_information = false;
  return fit_ols(m, s, fo);
}

}  // namespace detail

/// Parametric bootstrap under the null.  Data are generated from the
/// unconstrained fits if d_hat >= eps and from the fit constrained to the
/// manifold d = eps otherwise, with N(0, sigma2_hat_l) errors on the observed
/// designs.  Replicate b draws from the stream mix(seed, b), group 1 first.
inline BootstrapDistribution bootstrap_distribution(const ModelPtr& m1, const ModelPtr& m2, const GroupSample& s1,
                                                    const GroupSample& s2, double eps, Distance distance,
                                                    const BootstrapOptions& opt) {
  detail::check_eps(eps);
  if (opt.B < 1) throw Error(ErrorKind::InvalidArgument, "B must be >= 1");
  const Interval region = s1.region();
  const QuadratureRule quad = gauss_legendre(opt.quadrature_order, region);

  FitOptions fo;
  fo.compute_information = false;
  fo.starts = opt.starts1;
  const FitResult f1 = fit_ols(m1, s1, fo);
  fo.starts = opt.starts2;
  const FitResult f2 = fit_ols(m2, s2, fo);
  const PairedFit pf = pair_fits(f1, f2, region);

  BootstrapDistribution out;
  out.distance = distance;
  out.eps = eps;
  out.seed = opt.seed;
  out.requested = opt.B;
  out.statistic = distance_value(pf, distance, quad, opt.sup);
  out.sigma2_1 = f1.sigma2_hat;
  out.sigma2_2 = f2.sigma2_hat;

  std::optional<ConstrainedFit> cf;
  if (out.statistic < eps) cf = fit_constrained(m1, m2, s1, s2, eps, distance, f1, f2, opt.constrain);
  const NullParameters null = select_null_params(pf, eps, out.statistic, cf ? &*cf : nullptr);
  out.used_constrained = null.used_constrained;
  out.null_beta1 = null.beta1;
  out.null_beta2 = null.beta2;
  out.null_distance = distance_value(curves_only(m1, null.beta1, m2, null.beta2, region), distance, quad, opt.sup);

  const std::vector<std::size_t> c1 = s1.counts();
  const std::vector<std::size_t> c2 = s2.counts();
  std::vector<double> stats(static_cast<std::size_t>(opt.B), std::numeric_limits<double>::quiet_NaN());
  std::vector<char> retried(static_cast<std::size_t>(opt.B), 0);

  parallel_for(stats.size(), opt.workers, [&](std::size_t b) {
    RngStream stream(mix64(opt.seed, static_cast<std::uint64_t>(b)));
    const GroupSample g1 = simulate_sample(*m1, null.beta1, s1.doses(), c1, f1.sigma2_hat, stream, region);
    const GroupSample g2 = simulate_sample(*m2, null.beta2, s2.doses(), c2, f2.sigma2_hat, stream, region);
    for (int attempt = 0; attempt < 2; ++attempt) {
      try {
        const std::uint64_t offset = attempt == 0 ? 0 : 1000 + 97 * static_cast<std::uint64_t>(b);
        const FitResult r1 = detail::bootstrap_refit(m1, g1, null.beta1, opt.refit_random_starts, offset);
        const FitResult r2 = detail::bootstrap_refit(m2, g2, null.beta2, opt.refit_random_starts, offset);
        stats[b] = distance_value(curves_only(m1, r1.beta_hat, m2, r2.beta_hat, region), distance, quad, opt.sup);
        return;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonConvergence) throw;
        retried[b] = 1;
      }
    }
  });

  for (std::size_t b = 0; b < stats.size(); ++b) {
    out.retried += retried[b];
    if (std::isnan(stats[b])) {
      ++out.dropped;
    } else {
      out.sorted_stats.push_back(stats[b]);
    }
  }
  if (out.dropped > opt.max_drop_fraction * opt.B) {
    throw Error(ErrorKind::DroppedReplicates, std::to_string(out.dropped) + " of " + std::to_string(opt.B) +
                                                  " bootstrap refits failed to converge");
  }
  if (out.sorted_stats.empty()) throw Error(ErrorKind::EmptyStats, "no bootstrap statistics");
  std::sort(out.sorted_stats.begin(), out.sorted_stats.end());
  return out;
}

/// Decision at level alpha from a bootstrap distribution.
inline TestOutcome bootstrap_outcome(const BootstrapDistribution& bd, double alpha) {
  detail::check_alpha(alpha);
  TestOutcome out;
  out.method = bd.distance == Distance::L2SQ ? Method::BOOT_L2 : Method::BOOT_SUP;
  out.statistic = bd.statistic;
  out.eps = bd.eps;
  out.alpha = alpha;
  out.B = bd.requested;
  out.seed = bd.seed;
  out.critical_value = bootstrap_quantile(bd.sorted_stats, alpha);
  const auto below = std::upper_bound(bd.sorted_stats.begin(), bd.sorted_stats.end(), bd.statistic);
  out.p_value = static_cast<double>(below - bd.sorted_stats.begin()) / static_cast<double>(bd.sorted_stats.size());
  out.reject = out.statistic < *out.critical_value;
  out.diagnostics["used_constrained"] = bd.used_constrained;
  out.diagnostics["null_distance"] = bd.null_distance;
  out.diagnostics["sigma2_hat"] = {bd.sigma2_1, bd.sigma2_2};
  out.diagnostics["dropped"] = bd.dropped;
  out.diagnostics["retried"] = bd.retried;
  if (bd.requested < 300) out.diagnostics["warning"] = "B below 300";
  return out;
}

inline TestOutcome test_bootstrap(const ModelPtr& m1, const ModelPtr& m2, const GroupSample& s1, const GroupSample& s2,
                                  double eps, double alpha, Distance distance, const BootstrapOptions& opt) {
  detail::check_alpha(alpha);
  if (opt.B < 20) throw Error(ErrorKind::InvalidArgument, "B must be >= 20");
  return bootstrap_outcome(bootstrap_distribution(m1, m2, s1, s2, eps, distance, opt), alpha);
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_EQUIVALENCE_TESTS_HPP
