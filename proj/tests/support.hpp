#ifndef CURVE_EQUIV_TESTS_SUPPORT_HPP
#define CURVE_EQUIV_TESTS_SUPPORT_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "curve_equiv/data.hpp"
#include "curve_equiv/fitting.hpp"
#include "curve_equiv/models.hpp"
#include "curve_equiv/rng.hpp"

namespace testsupport {

using curve_equiv::Interval;
using curve_equiv::Vector;

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/// A pair of curves written out by hand, independent of the library models.
struct ClosedFormPair {
  std::string name;
  std::string model1, model2;
  Vector b1, b2;
  std::function<double(double)> delta;
};

inline std::vector<ClosedFormPair> scenario_pairs() {
  std::vector<ClosedFormPair> out;
  for (double d : {0.0, 0.5, 1.0}) {
    out.push_back({"shifted_emax_" + std::to_string(d), "emax", "emax", vec({d, 5, 1}), vec({0, 5, 1}),
                   [d](double x) { return d + 5 * x / (1 + x) - 5 * x / (1 + x); }});
  }
  for (double d : {0.25, 0.75, 1.5}) {
    out.push_back({"emax_exponential_" + std::to_string(d), "emax", "exponential", vec({1, 2, 1}), vec({d, 2.2, 8}),
                   [d](double x) { return 1 + 2 * x / (1 + x) - (d + 2.2 * (std::exp(x / 8) - 1)); }});
  }
  for (double d : {0.0, 1.0, 2.0}) {
    out.push_back({"emax_two_point_" + std::to_string(d), "emax", "emax", vec({d, 6, 2}), vec({0, 5, 1}),
                   [d](double x) { return d + 6 * x / (2 + x) - 5 * x / (1 + x); }});
  }
  for (double d : {0.1, 0.5, 1.0}) {
    out.push_back({"quadratic_linear_" + std::to_string(d), "quadratic", "linear", vec({d, -3 * d, 3 * d}), vec({d, d}),
                   [d](double x) { return d * x * x - 3 * d * x + 3 * d - (d + d * x); }});
  }
  return out;
}

/// Midpoint Riemann sum with m cells.
inline double riemann(const std::function<double(double)>& f, Interval r, int m) {
  const double h = r.length() / m;
  double s = 0.0;
  for (int i = 0; i < m; ++i) s += f(r.lo + (i + 0.5) * h);
  return s * h;
}

/// Brute-force maximum of |f| on a fine grid.
inline std::pair<double, double> grid_max_abs(const std::function<double(double)>& f, Interval r, int m) {
  double best = -1.0;
  double arg = r.lo;
  for (int i = 0; i <= m; ++i) {
    const double x = r.lo + r.length() * i / m;
    const double v = std::abs(f(x));
    if (v > best) {
      best = v;
      arg = x;
    }
  }
  return {best, arg};
}

inline curve_equiv::GroupSample sample(const std::string& model, const Vector& b, const std::vector<double>& doses,
                                       std::size_t per_dose, double sigma2, std::uint64_t seed,
                                       Interval region = {0.0, 4.0}) {
  curve_equiv::RngStream s(seed);
  return curve_equiv::simulate_sample(*curve_equiv::builtin(model), b, doses,
                                      std::vector<std::size_t>(doses.size(), per_dose), sigma2, s, region);
}

inline std::vector<double> doses04() { return {0, 1, 2, 3, 4}; }

/// Sample with exactly prescribed responses per dose.
inline curve_equiv::GroupSample fixed_sample(std::vector<double> doses, std::vector<std::vector<double>> ys, Interval region) {
  return curve_equiv::GroupSample(std::move(doses), std::move(ys), region);
}

}  // namespace testsupport

#endif  // CURVE_EQUIV_TESTS_SUPPORT_HPP
