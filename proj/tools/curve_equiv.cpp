// curve_equiv: fit, test, simulate and band profiles for two regression curves.
//
// Exit codes: 0 ok, 2 usage or validation error, 3 numerical failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "curve_equiv/data.hpp"
#include "curve_equiv/equivalence_tests.hpp"
#include "curve_equiv/fitting.hpp"
#include "curve_equiv/mcsim.hpp"
#include "curve_equiv/metrics.hpp"
#include "curve_equiv/models.hpp"
#include "curve_equiv/parallel.hpp"
#include "curve_equiv/report.hpp"

namespace ce = curve_equiv;

namespace {

constexpr int kUsage = 2;
constexpr int kNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string data;
  std::string model1;
  std::string model2;
  std::string region;
  std::string out;
  std::string format = "json";
  int threads = 0;
};

std::optional<ce::Interval> parse_region(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw UsageError("--region expects lo,hi");
  try {
    std::size_t used = 0;
    const std::string a = s.substr(0, comma);
    const std::string b = s.substr(comma + 1);
    const double lo = std::stod(a, &used);
    if (used != a.size()) throw UsageError("--region: bad number '" + a + "'");
    const double hi = std::stod(b, &used);
    if (used != b.size()) throw UsageError("--region: bad number '" + b + "'");
    if (!(hi > lo)) throw UsageError("--region needs lo < hi");
    return ce::Interval{lo, hi};
  } catch (const std::invalid_argument&) {
    throw UsageError("--region expects two numbers lo,hi");
  } catch (const std::out_of_range&) {
    throw UsageError("--region value out of range");
  }
}

int resolve_threads(int flag) { return flag > 0 ? flag : ce::default_workers(); }

/// Writes to --out or stdout.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw ce::Error(ce::ErrorKind::IOError, "cannot write '" + path + "'");
  f << text;
}

ce::PairedFit load_and_fit(const Common& c, bool information) {
  const auto pair = ce::load_samples_csv(c.data, parse_region(c.region));
  const ce::ModelPtr m1 = ce::builtin(c.model1);
  const ce::ModelPtr m2 = ce::builtin(c.model2);
  ce::FitOptions fo;
  fo.compute_information = information;
  return ce::pair_fits(ce::fit_ols(m1, pair.group1, fo), ce::fit_ols(m2, pair.group2, fo), pair.group1.region());
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int cmd_fit(const Common& c) {
  if (c.format != "json" && c.format != "csv") throw UsageError("--format must be json or csv");
  ce::PairedFit pf;
  bool singular = false;
  try {
    pf = load_and_fit(c, true);
  } catch (const ce::Error& e) {
    if (e.kind() != ce::ErrorKind::SingularInformation) throw;
    // still report the point estimates, then fail
    pf = load_and_fit(c, false);
    singular = true;
    std::cerr << "error: " << e.what() << '\n';
  }
  const auto report = ce::fit_report(pf, ce::default_rule(pf.region));
  if (c.format == "json") {
    emit(c.out, report.dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "group,model,parameter,value\n";
    for (const char* g : {"group1", "group2"}) {
      const auto& f = report[g];
      const auto& beta = f["beta_hat"];
      for (std::size_t j = 0; j < beta.size(); ++j) {
        os << g << ',' << f["model"].get<std::string>() << ",b" << j + 1 << ',' << csv_number(beta[j].get<double>()) << '\n';
      }
      os << g << ',' << f["model"].get<std::string>() << ",sigma2_hat," << csv_number(f["sigma2_hat"].get<double>()) << '\n';
    }
    os << "pair,,d2_hat," << csv_number(report["d2_hat"].get<double>()) << '\n';
    os << "pair,,dsup_hat," << csv_number(report["dsup_hat"].get<double>()) << '\n';
    emit(c.out, os.str());
  }
  return singular ? kNumerical : 0;
}

ce::Method parse_method(const std::string& s) {
  if (s == "l2-asymptotic") return ce::Method::L2_ASYMPTOTIC;
  if (s == "boot-l2") return ce::Method::BOOT_L2;
  if (s == "boot-sup") return ce::Method::BOOT_SUP;
  if (s == "sup-asymptotic") return ce::Method::SUP_ASYMPTOTIC;
  if (s == "band-iu") return ce::Method::BAND_IU;
  throw UsageError("unknown --method '" + s + "'");
}

struct TestArgs {
  std::string method;
  std::string distance;
  double eps = 0.0;
  double alpha = 0.05;
  int B = 300;
  std::uint64_t seed = 0;
};

int cmd_test(const Common& c, const TestArgs& t) {
  const ce::Method method = parse_method(t.method);
  if (!t.distance.empty()) {
    const auto want = t.distance == "l2sq" ? ce::Distance::L2SQ : ce::Distance::SUP;
    if (want != ce::method_distance(method)) throw UsageError("--distance conflicts with --method");
  }
  if (!(t.alpha > 0.0 && t.alpha < 0.5)) throw UsageError("--alpha must lie in (0, 0.5)");
  if (!(t.eps > 0.0)) throw UsageError("--eps must be positive");
  if (c.format != "json" && c.format != "csv") throw UsageError("--format must be json or csv");
  const bool boot = method == ce::Method::BOOT_L2 || method == ce::Method::BOOT_SUP;
  if (boot && t.B < 20) throw UsageError("--B must be at least 20");

  ce::TestOutcome out;
  if (boot) {
    const auto pair = ce::load_samples_csv(c.data, parse_region(c.region));
    ce::BootstrapOptions bo;
    bo.B = t.B;
    bo.seed = t.seed;
    bo.workers = resolve_threads(c.threads);
    out = ce::test_bootstrap(ce::builtin(c.model1), ce::builtin(c.model2), pair.group1, pair.group2, t.eps, t.alpha,
                             ce::method_distance(method), bo);
  } else {
    const ce::PairedFit pf = load_and_fit(c, true);
    switch (method) {
      case ce::Method::L2_ASYMPTOTIC: out = ce::test_l2_asymptotic(pf, t.eps, t.alpha, ce::default_rule(pf.region)); break;
      case ce::Method::SUP_ASYMPTOTIC: out = ce::test_sup_asymptotic(pf, t.eps, t.alpha); break;
      default: out = ce::test_band_iu(pf, t.eps, t.alpha); break;
    }
  }
  if (c.format == "json") {
    emit(c.out, nlohmann::json(out).dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "method,statistic,eps,alpha,critical_value,p_value,reject,B,seed\n";
    os << ce::to_string(out.method) << ',' << csv_number(out.statistic) << ',' << csv_number(out.eps) << ','
       << csv_number(out.alpha) << ',' << (out.critical_value ? csv_number(*out.critical_value) : "") << ','
       << (out.p_value ? csv_number(*out.p_value) : "") << ',' << (out.reject ? "true" : "false") << ',' << out.B << ','
       << out.seed << '\n';
    emit(c.out, os.str());
  }
  return 0;
}

struct SimArgs {
  std::string preset;
  std::string scenario;
  int nsim = 500;
  int B = 300;
  std::uint64_t seed = 0;
  bool nsim_set = false;
  bool B_set = false;
};

int cmd_simulate(const Common& c, const SimArgs& s) {
  if (s.preset.empty() == s.scenario.empty()) throw UsageError("give exactly one of --preset or --scenario");
  std::vector<ce::ScenarioConfig> cfgs;
  if (!s.preset.empty()) {
    try {
      cfgs = ce::preset(s.preset);
    } catch (const ce::Error& e) {
      throw UsageError(e.what());
    }
    for (auto& cfg : cfgs) {
      cfg.nsim = s.nsim;
      cfg.B = s.B;
      cfg.master_seed = s.seed;
    }
  } else {
    auto cfg = ce::load_scenario(s.scenario);
    if (s.nsim_set) cfg.nsim = s.nsim;
    if (s.B_set) cfg.B = s.B;
    cfgs.push_back(cfg);
  }
  for (const auto& cfg : cfgs) ce::validate(cfg);
  const int workers = resolve_threads(c.threads);
  std::vector<ce::ScenarioResult> results;
  for (const auto& cfg : cfgs) {
    results.push_back(ce::run_scenario(cfg, workers));
    const auto& r = results.back();
    std::cerr << cfg.id;
    for (const auto& cell : r.cells) {
      std::fprintf(stderr, "  %s@%g=%.3f", std::string(ce::to_string(cell.method)).c_str(), cell.alpha, cell.rate);
      if (cell.dropped) std::fprintf(stderr, " (dropped %d)", cell.dropped);
    }
    std::fprintf(stderr, "  [%.1fs]\n", r.wall_seconds);
  }
  std::ostringstream os;
  ce::emit_table(results, os);
  emit(c.out, os.str());
  return 0;
}

int cmd_bands(const Common& c, double alpha, int grid) {
  if (!(alpha > 0.0 && alpha <= 0.5)) throw UsageError("--alpha must lie in (0, 0.5]");
  if (grid < 2) throw UsageError("--grid must be at least 2");
  if (c.format != "csv") throw UsageError("bands only supports --format csv");
  const ce::PairedFit pf = load_and_fit(c, true);
  const auto b = ce::band_profile(pf, alpha, grid);
  std::ostringstream os;
  os << "x,delta,lower,upper\n";
  for (std::size_t i = 0; i < b.x.size(); ++i) {
    os << csv_number(b.x[i]) << ',' << csv_number(b.delta[i]) << ',' << csv_number(b.lower[i]) << ','
       << csv_number(b.upper[i]) << '\n';
  }
  emit(c.out, os.str());
  return 0;
}

void add_data_flags(CLI::App* sub, Common& c) {
  sub->add_option("--data", c.data, "CSV with header group,dose,response")->required();
  sub->add_option("--model1", c.model1, "model id for group 1")->required();
  sub->add_option("--model2", c.model2, "model id for group 2")->required();
  sub->add_option("--region", c.region, "covariate region lo,hi (default: dose range)");
}

void add_output_flags(CLI::App* sub, Common& c, const std::string& default_format) {
  c.format = default_format;
  sub->add_option("--out", c.out, "output path (default stdout)");
  sub->add_option("--format", c.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--threads", c.threads, "worker threads (default $CURVE_EQUIV_THREADS or 1)")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equivalence tests for two regression curves"};
  app.require_subcommand(1);

  Common fit_c, test_c, sim_c, band_c;
  TestArgs targs;
  SimArgs sargs;
  double band_alpha = 0.05;
  int band_grid = 201;

  auto* fit = app.add_subcommand("fit", "fit both groups and report estimates and distances");
  add_data_flags(fit, fit_c);
  add_output_flags(fit, fit_c, "json");

  auto* test = app.add_subcommand("test", "run one equivalence test");
  add_data_flags(test, test_c);
  add_output_flags(test, test_c, "json");
  test->add_option("--method", targs.method, "l2-asymptotic, boot-l2, boot-sup, sup-asymptotic or band-iu")->required();
  test->add_option("--distance", targs.distance, "l2sq or sup (must agree with --method)")
      ->check(CLI::IsMember({"l2sq", "sup"}));
  test->add_option("--eps", targs.eps, "equivalence threshold")->required();
  test->add_option("--alpha", targs.alpha, "level in (0, 0.5)")->required();
  test->add_option("--B", targs.B, "bootstrap replications");
  test->add_option("--seed", targs.seed, "master seed");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo rejection rates for a preset or scenario file");
  add_output_flags(sim, sim_c, "csv");
  sim->add_option("--preset", sargs.preset, "table id, row id or cell id");
  sim->add_option("--scenario", sargs.scenario, "scenario JSON file");
  auto* nsim_opt = sim->add_option("--nsim", sargs.nsim, "replicates per cell")->check(CLI::PositiveNumber);
  auto* b_opt = sim->add_option("--B", sargs.B, "bootstrap replications")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sargs.seed, "master seed");

  auto* bands = app.add_subcommand("bands", "pointwise confidence band of the curve difference");
  add_data_flags(bands, band_c);
  add_output_flags(bands, band_c, "csv");
  bands->add_option("--alpha", band_alpha, "level in (0, 0.5]");
  bands->add_option("--grid", band_grid, "number of grid points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*fit) return cmd_fit(fit_c);
    if (*test) return cmd_test(test_c, targs);
    if (*sim) {
      sargs.nsim_set = nsim_opt->count() > 0;
      sargs.B_set = b_opt->count() > 0;
      return cmd_simulate(sim_c, sargs);
    }
    if (*bands) return cmd_bands(band_c, band_alpha, band_grid);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ce::Error& e) {
    std::cerr << "error (" << ce::to_string(e.kind()) << "): " << e.what() << '\n';
    if (e.kind() == ce::ErrorKind::NonUniqueExtremum) std::cerr << "hint: use --method boot-sup\n";
    return e.is_numerical() ? kNumerical : kUsage;
  }
  return kUsage;
}
