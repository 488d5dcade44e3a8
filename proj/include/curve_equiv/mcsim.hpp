#ifndef CURVE_EQUIV_MCSIM_HPP
#define CURVE_EQUIV_MCSIM_HPP

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "curve_equiv/equivalence_tests.hpp"
#include "curve_equiv/errors.hpp"
#include "curve_equiv/fitting.hpp"
#include "curve_equiv/metrics.hpp"
#include "curve_equiv/models.hpp"
#include "curve_equiv/parallel.hpp"
#include "curve_equiv/rng.hpp"

namespace curve_equiv {

struct ScenarioConfig {
  std::string id;
  std::string model1;
  std::string model2;
  std::vector<double> true_beta1;
  std::vector<double> true_beta2;
  std::vector<double> doses1;
  std::vector<double> doses2;
  std::vector<std::size_t> counts1;
  std::vector<std::size_t> counts2;
  double sigma1_sq = 0.25;
  double sigma2_sq = 0.25;
  Interval region{0.0, 4.0};
  Distance distance = Distance::L2SQ;
  double eps = 1.0;
  std::vector<double> alphas{0.05, 0.1};
  std::vector<Method> methods{Method::BOOT_L2};
  int nsim = 500;
  int B = 300;
  std::uint64_t master_seed = 0;
  double delta = 0.0;  // table label (delta or d); not used by the simulation
  int refit_random_starts = 10;

  std::size_t n1() const {
    std::size_t s = 0;
    for (auto c : counts1) s += c;
    return s;
  }
  std::size_t n2() const {
    std::size_t s = 0;
    for (auto c : counts2) s += c;
    return s;
  }
};

inline void validate(const ScenarioConfig& cfg, const ModelRegistry& reg = builtin_registry()) {
  auto fail = [&](const std::string& what) { throw Error(ErrorKind::InvalidArgument, "scenario '" + cfg.id + "': " + what); };
  if (cfg.nsim < 1) fail("nsim must be >= 1");
  if (cfg.B < 1) fail("B must be >= 1");
  if (!(cfg.eps > 0.0)) fail("eps must be positive");
  if (cfg.alphas.empty()) fail("alphas must not be empty");
  for (double a : cfg.alphas) {
    if (!(a > 0.0 && a < 0.5)) fail("alphas must lie in (0, 0.5)");
  }
  if (cfg.methods.empty()) fail("methods must not be empty");
  for (Method m : cfg.methods) {
    if (method_distance(m) != cfg.distance) fail("method " + std::string(to_string(m)) + " does not use the scenario distance");
  }
  const ModelPtr m1 = reg.lookup(cfg.model1);
  const ModelPtr m2 = reg.lookup(cfg.model2);
  if (static_cast<int>(cfg.true_beta1.size()) != m1->p) fail("true_beta1 has wrong length");
  if (static_cast<int>(cfg.true_beta2.size()) != m2->p) fail("true_beta2 has wrong length");
  if (cfg.doses1.size() != cfg.counts1.size() || cfg.doses2.size() != cfg.counts2.size()) fail("doses and counts differ in length");
  if (cfg.doses1.empty() || cfg.doses2.empty()) fail("each group needs at least one dose");
  if (!(cfg.sigma1_sq > 0.0 && cfg.sigma2_sq > 0.0)) fail("variances must be positive");
  if (!(cfg.region.hi > cfg.region.lo)) fail("region must have positive length");
}

/// Rejection counts of one (method, alpha) cell.
struct CellResult {
  Method method = Method::BOOT_L2;
  double alpha = 0.05;
  int rejections = 0;
  int valid = 0;
  int dropped = 0;
  double rate = 0.0;
  double se = 0.0;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<CellResult> cells;  // method-major, then alpha
  double true_d2 = 0.0;
  double true_dsup = 0.0;
  double wall_seconds = 0.0;

  const CellResult& cell(Method m, double alpha) const {
    for (const auto& c : cells) {
      if (c.method == m && c.alpha == alpha) return c;
    }
    throw Error(ErrorKind::NotFound, "no cell for " + std::string(to_string(m)));
  }
};

namespace detail {

inline Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

/// -1: dropped, 0: accept, 1: reject; indexed [method][alpha].
using Decisions = std::vector<std::vector<signed char>>;

inline Decisions run_replicate(const ScenarioConfig& cfg, const ModelPtr& m1, const ModelPtr& m2, std::uint64_t stream_seed) {
  const Vector b1 = to_vector(cfg.true_beta1);
  const Vector b2 = to_vector(cfg.true_beta2);
  RngStream stream(stream_seed);
  const GroupSample s1 = simulate_sample(*m1, b1, cfg.doses1, cfg.counts1, cfg.sigma1_sq, stream, cfg.region);
  const GroupSample s2 = simulate_sample(*m2, b2, cfg.doses2, cfg.counts2, cfg.sigma2_sq, stream, cfg.region);

  Decisions out(cfg.methods.size(), std::vector<signed char>(cfg.alphas.size(), -1));
  const QuadratureRule quad = default_rule(cfg.region);

  // Fits with information matrices for the asymptotic and band rules.
  std::optional<PairedFit> pf;
  auto paired = [&]() -> const PairedFit& {
    if (!pf) {
      FitOptions fo;
      fo.quasi_random_starts = cfg.refit_random_starts;
      fo.starts = {b1};
      FitResult f1 = fit_ols(m1, s1, fo);
      fo.starts = {b2};
      FitResult f2 = fit_ols(m2, s2, fo);
      pf = pair_fits(std::move(f1), std::move(f2), cfg.region);
    }
    return *pf;
  };
  std::optional<BootstrapDistribution> boot;

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const Method m = cfg.methods[mi];
    for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
      const double alpha = cfg.alphas[ai];
      try {
        TestOutcome t;
        switch (m) {
          case Method::L2_ASYMPTOTIC: t = test_l2_asymptotic(paired(), cfg.eps, alpha, quad); break;
          case Method::SUP_ASYMPTOTIC: t = test_sup_asymptotic(paired(), cfg.eps, alpha); break;
          case Method::BAND_IU: t = test_band_iu(paired(), cfg.eps, alpha); break;
          case Method::BOOT_L2:
          case Method::BOOT_SUP: {
            if (!boot) {
              BootstrapOptions bo;
              bo.B = cfg.B;
              bo.seed = mix64(stream_seed, 0xb0075eedULL);
              bo.refit_random_starts = cfg.refit_random_starts;
              bo.starts1 = {b1};
              bo.starts2 = {b2};
              boot = bootstrap_distribution(m1, m2, s1, s2, cfg.eps, cfg.distance, bo);
            }
            t = bootstrap_outcome(*boot, alpha);
            break;
          }
        }
        out[mi][ai] = t.reject ? 1 : 0;
      } catch (const Error& e) {
        if (!e.is_numerical()) throw;
        // A singular information matrix means an unbounded variance estimate:
        // the asymptotic and band rules cannot reject.  Other failures drop
        // the replicate for this method.
        const bool variance_based = m == Method::L2_ASYMPTOTIC || m == Method::SUP_ASYMPTOTIC || m == Method::BAND_IU;
        if (variance_based && e.kind() == ErrorKind::SingularInformation) out[mi][ai] = 0;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Runs nsim replicates.  Replicate i draws from mix(master_seed, hash(id), i),
/// group 1 before group 2; bootstrap streams derive from the replicate stream.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg, int workers = 1) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const ModelPtr m1 = builtin(cfg.model1);
  const ModelPtr m2 = builtin(cfg.model2);

  ScenarioResult res;
  res.config = cfg;
  const PairedFit truth = curves_only(m1, detail::to_vector(cfg.true_beta1), m2, detail::to_vector(cfg.true_beta2), cfg.region);
  res.true_d2 = dist_l2sq(truth, default_rule(cfg.region));
  res.true_dsup = dist_sup(truth).value;

  const std::uint64_t scenario_key = hash_id(cfg.id);
  std::vector<detail::Decisions> all(static_cast<std::size_t>(cfg.nsim));
  parallel_for(all.size(), workers, [&](std::size_t i) {
    all[i] = detail::run_replicate(cfg, m1, m2, mix64(cfg.master_seed, scenario_key, static_cast<std::uint64_t>(i)));
  });

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
      CellResult c;
      c.method = cfg.methods[mi];
      c.alpha = cfg.alphas[ai];
      for (const auto& d : all) {
        const signed char v = d[mi][ai];
        if (v < 0) {
          ++c.dropped;
        } else {
          ++c.valid;
          c.rejections += v;
        }
      }
      if (c.valid > 0) {
        c.rate = static_cast<double>(c.rejections) / c.valid;
        c.se = std::sqrt(c.rate * (1.0 - c.rate) / c.valid);
      }
      res.cells.push_back(c);
    }
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------------------
// Presets

namespace detail {

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct PairSetup {
  std::string model1, model2;
  std::vector<double> beta1, beta2;
};

struct TableLayout {
  std::string table;
  std::string label;  // "delta" or "d"
  std::vector<double> values;
  Distance distance;
  double eps;
  std::vector<Method> methods;
  PairSetup (*pair)(double);
};

inline PairSetup shifted_emax(double delta) { return {"emax", "emax", {delta, 5.0, 1.0}, {0.0, 5.0, 1.0}}; }
inline PairSetup emax_vs_exponential(double delta) { return {"emax", "exponential", {1.0, 2.0, 1.0}, {delta, 2.2, 8.0}}; }
inline PairSetup emax_two_point(double d) { return {"emax", "emax", {d, 6.0, 2.0}, {0.0, 5.0, 1.0}}; }
inline PairSetup quadratic_vs_linear(double d) {
  const double delta = d / 2.0;
  return {"quadratic", "linear", {delta, -3.0 * delta, 3.0 * delta}, {delta, delta}};
}

inline const std::vector<TableLayout>& table_layouts() {
  static const std::vector<TableLayout> layouts = {
      {"table1", "delta", {1.0, 0.75, 0.5}, Distance::L2SQ, 1.0, {Method::BOOT_L2}, shifted_emax},
      {"table2", "delta", {1.0, 0.75, 0.5}, Distance::L2SQ, 1.0, {Method::L2_ASYMPTOTIC}, shifted_emax},
      {"table3", "delta", {0.25, 0.1, 0.0}, Distance::L2SQ, 1.0, {Method::BOOT_L2}, shifted_emax},
      {"table4", "delta", {0.25, 0.1, 0.0}, Distance::L2SQ, 1.0, {Method::L2_ASYMPTOTIC}, shifted_emax},
      {"table5", "delta", {0.25, 0.5, 0.75}, Distance::SUP, 1.0, {Method::BOOT_SUP, Method::BAND_IU}, emax_vs_exponential},
      {"table5asym", "delta", {0.25, 0.5, 0.75}, Distance::SUP, 1.0, {Method::SUP_ASYMPTOTIC}, emax_vs_exponential},
      {"table6", "delta", {1.0, 1.5}, Distance::SUP, 1.0, {Method::BOOT_SUP, Method::BAND_IU}, emax_vs_exponential},
      {"table6asym", "delta", {1.0, 1.5}, Distance::SUP, 1.0, {Method::SUP_ASYMPTOTIC}, emax_vs_exponential},
      {"table7", "d", {2.0, 1.5, 1.0}, Distance::SUP, 1.0, {Method::BOOT_SUP, Method::BAND_IU}, emax_two_point},
      {"table8", "d", {0.75, 0.5, 0.0}, Distance::SUP, 1.0, {Method::BOOT_SUP, Method::BAND_IU}, emax_two_point},
      {"table9", "d", {1.0, 0.75, 0.5}, Distance::SUP, 0.5, {Method::BOOT_SUP, Method::BAND_IU}, shifted_emax},
      {"table10", "d", {0.25, 0.1, 0.0}, Distance::SUP, 0.5, {Method::BOOT_SUP, Method::BAND_IU}, shifted_emax},
      {"table11", "d", {2.0, 1.5, 1.0}, Distance::SUP, 1.0, {Method::BOOT_SUP, Method::BAND_IU}, quadratic_vs_linear},
      {"table12", "d", {0.4, 0.2}, Distance::SUP, 1.0, {Method::BOOT_SUP, Method::BAND_IU}, quadratic_vs_linear},
  };
  return layouts;
}

inline const std::vector<std::pair<std::size_t, std::size_t>>& sample_sizes() {
  static const std::vector<std::pair<std::size_t, std::size_t>> n{{10, 10}, {10, 20}, {20, 20}, {50, 50}};
  return n;
}

inline const std::vector<std::pair<double, double>>& variance_pairs() {
  static const std::vector<std::pair<double, double>> v{{0.25, 0.25}, {0.5, 0.5}, {0.25, 0.5}};
  return v;
}

inline std::string row_id(const TableLayout& t, std::size_t n1, std::size_t n2, double value) {
  std::string id = t.table + "_row_n" + std::to_string(n1);
  if (n2 != n1) id += "x" + std::to_string(n2);
  return id + "_" + t.label + fmt_num(value);
}

inline std::string cell_suffix(double s1, double s2) { return "_s" + fmt_num(s1) + "_" + fmt_num(s2); }

/// Equal allocation of a group total over the five doses 0..4.
inline std::vector<std::size_t> spread(std::size_t total) {
  std::vector<std::size_t> c(5, total / 5);
  for (std::size_t i = 0; i < total % 5; ++i) ++c[i];
  return c;
}

inline ScenarioConfig make_cell(const TableLayout& t, std::size_t n1, std::size_t n2, double value, double s1, double s2) {
  const PairSetup ps = t.pair(value);
  ScenarioConfig c;
  c.id = row_id(t, n1, n2, value) + cell_suffix(s1, s2);
  c.model1 = ps.model1;
  c.model2 = ps.model2;
  c.true_beta1 = ps.beta1;
  c.true_beta2 = ps.beta2;
  c.doses1 = c.doses2 = {0.0, 1.0, 2.0, 3.0, 4.0};
  c.counts1 = spread(n1);
  c.counts2 = spread(n2);
  c.sigma1_sq = s1;
  c.sigma2_sq = s2;
  c.region = {0.0, 4.0};
  c.distance = t.distance;
  c.eps = t.eps;
  c.methods = t.methods;
  c.delta = value;
  return c;
}

}  // namespace detail

/// Every preset cell keyed by its cell id ("<row id>_s<s1>_<s2>").
inline std::map<std::string, ScenarioConfig> builtin_scenarios() {
  std::map<std::string, ScenarioConfig> out;
  for (const auto& t : detail::table_layouts()) {
    for (const auto& [n1, n2] : detail::sample_sizes()) {
      for (double v : t.values) {
        for (const auto& [s1, s2] : detail::variance_pairs()) {
          ScenarioConfig c = detail::make_cell(t, n1, n2, v, s1, s2);
          out.emplace(c.id, std::move(c));
        }
      }
    }
  }
  return out;
}

inline std::vector<std::string> preset_tables() {
  std::vector<std::string> ids;
  for (const auto& t : detail::table_layouts()) ids.push_back(t.table);
  return ids;
}

/// Resolves a table id (all cells, in table order), a row id (the
/// (0.25, 0.25) cell) or a cell id.
inline std::vector<ScenarioConfig> preset(const std::string& id) {
  for (const auto& t : detail::table_layouts()) {
    if (t.table != id) continue;
    std::vector<ScenarioConfig> cells;
    for (const auto& [n1, n2] : detail::sample_sizes()) {
      for (double v : t.values) {
        for (const auto& [s1, s2] : detail::variance_pairs()) cells.push_back(detail::make_cell(t, n1, n2, v, s1, s2));
      }
    }
    return cells;
  }
  const auto all = builtin_scenarios();
  if (auto it = all.find(id); it != all.end()) return {it->second};
  if (auto it = all.find(id + detail::cell_suffix(0.25, 0.25)); it != all.end()) return {it->second};
  throw Error(ErrorKind::NotFound, "unknown preset '" + id + "'");
}

inline const char* results_header() {
  return "scenario_id,method,alpha,n1,n2,sigma1_sq,sigma2_sq,delta,true_d2,true_dsup,rate,se,nsim,B,seed";
}

inline void emit_table(const std::vector<ScenarioResult>& results, std::ostream& out) {
  out << results_header() << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  for (const auto& r : results) {
    const auto& c = r.config;
    for (const auto& cell : r.cells) {
      const bool boot = cell.method == Method::BOOT_L2 || cell.method == Method::BOOT_SUP;
      out << c.id << ',' << to_string(cell.method) << ',' << num(cell.alpha) << ',' << c.n1() << ',' << c.n2() << ','
          << num(c.sigma1_sq) << ',' << num(c.sigma2_sq) << ',' << num(c.delta) << ',' << num(r.true_d2) << ','
          << num(r.true_dsup) << ',' << num(cell.rate) << ',' << num(cell.se) << ',' << c.nsim << ','
          << (boot ? c.B : 0) << ',' << c.master_seed << '\n';
    }
  }
}

inline void emit_table(const std::vector<ScenarioResult>& results, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::IOError, "cannot write '" + path + "'");
  emit_table(results, f);
  if (!f) throw Error(ErrorKind::IOError, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.emplace_back(to_string(m));
  j = nlohmann::json{{"id", c.id},
                     {"model1", c.model1},
                     {"model2", c.model2},
                     {"true_beta1", c.true_beta1},
                     {"true_beta2", c.true_beta2},
                     {"doses", {c.doses1, c.doses2}},
                     {"counts", {c.counts1, c.counts2}},
                     {"sigma2", {c.sigma1_sq, c.sigma2_sq}},
                     {"region", {c.region.lo, c.region.hi}},
                     {"distance", to_string(c.distance)},
                     {"eps", c.eps},
                     {"alphas", c.alphas},
                     {"methods", methods},
                     {"nsim", c.nsim},
                     {"B", c.B},
                     {"master_seed", c.master_seed},
                     {"delta", c.delta},
                     {"refit_random_starts", c.refit_random_starts}};
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  try {
    c.id = j.at("id").get<std::string>();
    c.model1 = j.at("model1").get<std::string>();
    c.model2 = j.at("model2").get<std::string>();
    c.true_beta1 = j.at("true_beta1").get<std::vector<double>>();
    c.true_beta2 = j.at("true_beta2").get<std::vector<double>>();
    const auto& doses = j.at("doses");
    const auto& counts = j.at("counts");
    if (doses.size() != 2 || counts.size() != 2) throw Error(ErrorKind::ParseError, "doses and counts need one list per group");
    c.doses1 = doses[0].get<std::vector<double>>();
    c.doses2 = doses[1].get<std::vector<double>>();
    c.counts1 = counts[0].get<std::vector<std::size_t>>();
    c.counts2 = counts[1].get<std::vector<std::size_t>>();
    const auto s2 = j.at("sigma2").get<std::vector<double>>();
    const auto reg = j.at("region").get<std::vector<double>>();
    if (s2.size() != 2 || reg.size() != 2) throw Error(ErrorKind::ParseError, "sigma2 and region need two entries");
    c.sigma1_sq = s2[0];
    c.sigma2_sq = s2[1];
    c.region = {reg[0], reg[1]};
    const auto dist = j.at("distance").get<std::string>();
    if (dist == "L2SQ") {
      c.distance = Distance::L2SQ;
    } else if (dist == "SUP") {
      c.distance = Distance::SUP;
    } else {
      throw Error(ErrorKind::ParseError, "distance must be L2SQ or SUP");
    }
    c.eps = j.at("eps").get<double>();
    c.alphas = j.at("alphas").get<std::vector<double>>();
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
    c.nsim = j.at("nsim").get<int>();
    c.B = j.at("B").get<int>();
    c.master_seed = j.at("master_seed").get<std::uint64_t>();
    c.delta = j.value("delta", 0.0);
    c.refit_random_starts = j.value("refit_random_starts", 10);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("scenario config: ") + e.what());
  }
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::IOError, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("scenario config: ") + e.what());
  }
  ScenarioConfig c = j.get<ScenarioConfig>();
  validate(c);
  return c;
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_MCSIM_HPP
