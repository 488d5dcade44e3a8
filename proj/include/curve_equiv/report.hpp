#ifndef CURVE_EQUIV_REPORT_HPP
#define CURVE_EQUIV_REPORT_HPP

#include <nlohmann/json.hpp>

#include <vector>

#include "curve_equiv/fitting.hpp"
#include "curve_equiv/metrics.hpp"

namespace curve_equiv {

inline nlohmann::json to_json_value(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nlohmann::json fit_json(const FitResult& f) {
  nlohmann::json j{{"model", f.model->id},
                   {"beta_hat", to_json_value(f.beta_hat)},
                   {"sigma2_hat", f.sigma2_hat},
                   {"ssr", f.ssr},
                   {"n", f.n},
                   {"converged", f.converged},
                   {"n_starts_used", f.n_starts_used},
                   {"warnings", f.warnings}};
  j["condition_number"] = std::isfinite(f.condition_number) ? nlohmann::json(f.condition_number) : nlohmann::json();
  return j;
}

/// Both fits plus the estimated distances.
inline nlohmann::json fit_report(const PairedFit& pf, const QuadratureRule& quad, const SupOptions& sup = {}) {
  const SupResult sr = dist_sup(pf, sup);
  return nlohmann::json{{"region", {pf.region.lo, pf.region.hi}},
                        {"lambda", pf.lambda},
                        {"group1", fit_json(pf.fit1)},
                        {"group2", fit_json(pf.fit2)},
                        {"d2_hat", dist_l2sq(pf, quad)},
                        {"dsup_hat", sr.value},
                        {"extremal_points", sr.extremal_points},
                        {"extremal_signs", sr.signs},
                        {"plateau", sr.plateau}};
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_REPORT_HPP
