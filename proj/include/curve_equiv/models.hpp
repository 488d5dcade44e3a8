#ifndef CURVE_EQUIV_MODELS_HPP
#define CURVE_EQUIV_MODELS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "curve_equiv/errors.hpp"

namespace curve_equiv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Closed covariate interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  bool operator==(const Interval&) const = default;
  double length() const { return hi - lo; }
  bool contains(double x, double slack = 1e-12) const {
    return x >= lo - slack * std::max(1.0, std::abs(lo)) && x <= hi + slack * std::max(1.0, std::abs(hi));
  }
};

/// Compact parameter search set, one [lower, upper] pair per coordinate.
struct ParameterBox {
  Vector lower;
  Vector upper;

  Eigen::Index size() const { return lower.size(); }
  bool contains(const Vector& b) const {
    return b.size() == lower.size() && (b.array() >= lower.array()).all() && (b.array() <= upper.array()).all();
  }
  Vector project(Vector b) const { return b.cwiseMax(lower).cwiseMin(upper); }
};

using EvalFn = std::function<double(double x, const Vector& b)>;
/// Writes dm/db into `out` (length p).
using GradFn = std::function<void(double x, const Vector& b, std::span<double> out)>;
/// Returns an empty string when (x, b) is admissible, otherwise the reason.
using DomainFn = std::function<std::string(double x, const Vector& b)>;

/// A parametric regression family m(x, b).  Immutable once registered.
struct ModelSpec {
  std::string id;
  int p = 0;
  EvalFn eval;
  GradFn grad;  // empty -> central finite differences
  ParameterBox box;
  DomainFn domain;  // optional family restriction
  std::string formula;

  bool numeric_gradient() const { return !static_cast<bool>(grad); }
};

using ModelPtr = std::shared_ptr<const ModelSpec>;

namespace detail {

inline void check_call(const ModelSpec& spec, double x, const Vector& b) {
  if (b.size() != spec.p) {
    throw Error(ErrorKind::DimensionMismatch, "model '" + spec.id + "' expects " + std::to_string(spec.p) +
                                                  " parameters, got " + std::to_string(b.size()));
  }
  if (spec.domain) {
    if (auto why = spec.domain(x, b); !why.empty()) {
      throw Error(ErrorKind::DomainError, "model '" + spec.id + "': " + why);
    }
  }
}

inline double fd_step(double bj) { return 1e-6 * std::max(1.0, std::abs(bj)); }

/// Central differences with step 1e-6 * max(1, |b_j|).
inline void central_difference(const EvalFn& f, double x, const Vector& b, std::span<double> out) {
  Vector work = b;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double h = fd_step(b[j]);
    work[j] = b[j] + h;
    const double up = f(x, work);
    work[j] = b[j] - h;
    const double down = f(x, work);
    work[j] = b[j];
    out[static_cast<std::size_t>(j)] = (up - down) / (2.0 * h);
  }
}

}  // namespace detail

/// m(x, b) with dimension and domain validation.
inline double eval_model(const ModelSpec& spec, double x, const Vector& b) {
  detail::check_call(spec, x, b);
  return spec.eval(x, b);
}

/// dm/db into a caller-owned buffer.  Falls back to central differences for
/// families registered without an analytic gradient (see numeric_gradient()).
inline void eval_gradient(const ModelSpec& spec, double x, const Vector& b, std::span<double> out) {
  detail::check_call(spec, x, b);
  if (out.size() != static_cast<std::size_t>(spec.p)) {
    throw Error(ErrorKind::DimensionMismatch, "gradient buffer has wrong length");
  }
  if (spec.grad) {
    spec.grad(x, b, out);
  } else {
    detail::central_difference(spec.eval, x, b, out);
  }
}

inline Vector eval_gradient(const ModelSpec& spec, double x, const Vector& b) {
  Vector g(spec.p);
  eval_gradient(spec, x, b, std::span<double>(g.data(), static_cast<std::size_t>(g.size())));
  return g;
}

// ---------------------------------------------------------------------------
// Builtin families

enum class BuiltinFamily { Emax, Exponential, Linear, Quadratic, Constant };

namespace detail {

inline ParameterBox uniform_box(int p, double lo, double hi) {
  return {Vector::Constant(p, lo), Vector::Constant(p, hi)};
}

}  // namespace detail

inline ModelSpec make_builtin(BuiltinFamily family) {
  ModelSpec s;
  switch (family) {
    case BuiltinFamily::Emax:
      s.id = "emax";
      s.p = 3;
      s.formula = "b1 + b2*x/(b3 + x)";
      s.eval = [](double x, const Vector& b) { return b[0] + b[1] * x / (b[2] + x); };
      s.grad = [](double x, const Vector& b, std::span<double> g) {
        const double den = b[2] + x;
        g[0] = 1.0;
        g[1] = x / den;
        g[2] = -b[1] * x / (den * den);
      };
      s.box = detail::uniform_box(3, -1e3, 1e3);
      s.box.lower[2] = 1e-3;
      s.domain = [](double x, const Vector& b) -> std::string {
        if (!(b[2] > 0.0)) return "EMAX requires b3 > 0";
        if (!(b[2] + x > 0.0)) return "EMAX requires b3 + x > 0";
        return {};
      };
      break;
    case BuiltinFamily::Exponential:
      s.id = "exponential";
      s.p = 3;
      s.formula = "b1 + b2*(exp(x/b3) - 1)";
      s.eval = [](double x, const Vector& b) { return b[0] + b[1] * std::expm1(x / b[2]); };
      s.grad = [](double x, const Vector& b, std::span<double> g) {
        const double e = std::exp(x / b[2]);
        g[0] = 1.0;
        g[1] = e - 1.0;
        g[2] = -b[1] * e * x / (b[2] * b[2]);
      };
      s.box = detail::uniform_box(3, -1e3, 1e3);
      s.box.lower[2] = 0.1;
      s.domain = [](double, const Vector& b) -> std::string {
        if (b[2] == 0.0) return "EXPONENTIAL requires b3 != 0";
        return {};
      };
      break;
    case BuiltinFamily::Linear:
      s.id = "linear";
      s.p = 2;
      s.formula = "b1 + b2*x";
      s.eval = [](double x, const Vector& b) { return b[0] + b[1] * x; };
      s.grad = [](double x, const Vector&, std::span<double> g) {
        g[0] = 1.0;
        g[1] = x;
      };
      s.box = detail::uniform_box(2, -1e3, 1e3);
      break;
    case BuiltinFamily::Quadratic:
      s.id = "quadratic";
      s.p = 3;
      s.formula = "b1*x^2 + b2*x + b3";
      s.eval = [](double x, const Vector& b) { return (b[0] * x + b[1]) * x + b[2]; };
      s.grad = [](double x, const Vector&, std::span<double> g) {
        g[0] = x * x;
        g[1] = x;
        g[2] = 1.0;
      };
      s.box = detail::uniform_box(3, -1e3, 1e3);
      break;
    case BuiltinFamily::Constant:
      s.id = "constant";
      s.p = 1;
      s.formula = "b1";
      s.eval = [](double, const Vector& b) { return b[0]; };
      s.grad = [](double, const Vector&, std::span<double> g) { g[0] = 1.0; };
      s.box = detail::uniform_box(1, -1e3, 1e3);
      break;
  }
  return s;
}

/// Id -> spec lookup table.  Builtins are always present; user families may be
/// added as long as their id is unused.
class ModelRegistry {
 public:
  ModelRegistry() = default;

  void add(ModelSpec spec) {
    if (spec.id.empty()) throw Error(ErrorKind::InvalidArgument, "model id must not be empty");
    if (spec.p <= 0) throw Error(ErrorKind::InvalidArgument, "model '" + spec.id + "' needs p >= 1");
    if (!spec.eval) throw Error(ErrorKind::InvalidArgument, "model '" + spec.id + "' has no eval function");
    if (spec.box.size() != spec.p || spec.box.upper.size() != spec.p) {
      throw Error(ErrorKind::DimensionMismatch, "model '" + spec.id + "' box must have p entries");
    }
    if ((spec.box.lower.array() > spec.box.upper.array()).any()) {
      throw Error(ErrorKind::InvalidArgument, "model '" + spec.id + "' box has lower > upper");
    }
    if (models_.count(spec.id) != 0) throw Error(ErrorKind::DuplicateId, "model id '" + spec.id + "' already registered");
    auto id = spec.id;
    models_.emplace(std::move(id), std::make_shared<const ModelSpec>(std::move(spec)));
  }

  ModelPtr lookup(const std::string& id) const {
    auto it = models_.find(id);
    if (it == models_.end()) throw Error(ErrorKind::NotFound, "unknown model id '" + id + "'");
    return it->second;
  }

  bool contains(const std::string& id) const { return models_.count(id) != 0; }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(models_.size());
    for (const auto& [id, _] : models_) out.push_back(id);
    return out;
  }

 private:
  std::map<std::string, ModelPtr> models_;
};

inline ModelRegistry builtin_registry() {
  ModelRegistry r;
  for (auto f : {BuiltinFamily::Emax, BuiltinFamily::Exponential, BuiltinFamily::Linear, BuiltinFamily::Quadratic,
                 BuiltinFamily::Constant}) {
    r.add(make_builtin(f));
  }
  return r;
}

inline ModelPtr builtin(BuiltinFamily family) {
  static const ModelRegistry registry = builtin_registry();
  switch (family) {
    case BuiltinFamily::Emax: return registry.lookup("emax");
    case BuiltinFamily::Exponential: return registry.lookup("exponential");
    case BuiltinFamily::Linear: return registry.lookup("linear");
    case BuiltinFamily::Quadratic: return registry.lookup("quadratic");
    case BuiltinFamily::Constant: return registry.lookup("constant");
  }
  throw Error(ErrorKind::NotFound, "unknown builtin family");
}

inline ModelPtr builtin(const std::string& id) {
  static const ModelRegistry registry = builtin_registry();
  return registry.lookup(id);
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_MODELS_HPP
