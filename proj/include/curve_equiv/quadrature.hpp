#ifndef CURVE_EQUIV_QUADRATURE_HPP
#define CURVE_EQUIV_QUADRATURE_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "curve_equiv/errors.hpp"
#include "curve_equiv/models.hpp"

namespace curve_equiv {

/// Gauss-Legendre nodes and weights mapped onto an interval.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  Interval interval;
  int order = 0;

  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) s += weights[q] * f(nodes[q]);
    return s;
  }
};

/// Nodes on [-1, 1] by Newton iteration on P_n from the Chebyshev guess.
inline QuadratureRule gauss_legendre(int order, Interval interval) {
  if (order < 1) throw Error(ErrorKind::InvalidArgument, "quadrature order must be >= 1");
  if (!(interval.hi > interval.lo)) throw Error(ErrorKind::InvalidArgument, "quadrature interval must have positive length");
  QuadratureRule rule;
  rule.order = order;
  rule.interval = interval;
  rule.nodes.resize(static_cast<std::size_t>(order));
  rule.weights.resize(static_cast<std::size_t>(order));
  const double half = 0.5 * interval.length();
  const double mid = 0.5 * (interval.lo + interval.hi);
  const int m = (order + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int j = 0; j < order; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = order * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0;
    double p1 = 0.0;
    for (int j = 0; j < order; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
    }
    dp = order * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    const auto lo_idx = static_cast<std::size_t>(i);
    const auto hi_idx = static_cast<std::size_t>(order - 1 - i);
    rule.nodes[lo_idx] = mid - half * z;
    rule.nodes[hi_idx] = mid + half * z;
    rule.weights[lo_idx] = half * w;
    rule.weights[hi_idx] = half * w;
  }
  return rule;
}

inline QuadratureRule default_rule(Interval interval) { return gauss_legendre(64, interval); }

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_QUADRATURE_HPP
