#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "curve_equiv/models.hpp"
#include "support.hpp"

using namespace curve_equiv;
using testsupport::vec;

TEST(Models, EvalExamples) {
  EXPECT_DOUBLE_EQ(eval_model(*builtin("linear"), 0.0, vec({0.398, 0.043})), 0.398);
  EXPECT_NEAR(eval_model(*builtin("emax"), 4.0, vec({0.220, 0.517, 1.396})), 0.220 + 0.517 * 4 / 5.396, 1e-15);
  EXPECT_NEAR(eval_model(*builtin("emax"), 4.0, vec({0.220, 0.517, 1.396})), 0.6033, 1e-4);
  for (double d : {0.5, 1.0, 2.0}) {
    EXPECT_NEAR(eval_model(*builtin("quadratic"), 2.0, vec({d, -4 * d, 2 * d})), -2 * d, 1e-14);
  }
  EXPECT_NEAR(eval_model(*builtin("exponential"), 8.0, vec({1, 2, 8})), 1 + 2 * (std::exp(1.0) - 1), 1e-14);
  EXPECT_DOUBLE_EQ(eval_model(*builtin("constant"), 3.0, vec({0.7})), 0.7);
}

TEST(Models, GradientExamples) {
  const Vector g = eval_gradient(*builtin("linear"), 3.0, vec({5, -1}));
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[1], 3.0);
  const Vector ge = eval_gradient(*builtin("emax"), 1.0, vec({0, 5, 1}));
  EXPECT_DOUBLE_EQ(ge[0], 1.0);
  EXPECT_DOUBLE_EQ(ge[1], 0.5);
  EXPECT_DOUBLE_EQ(ge[2], -1.25);
  const Vector gc = eval_gradient(*builtin("constant"), 2.5, vec({9}));
  ASSERT_EQ(gc.size(), 1);
  EXPECT_DOUBLE_EQ(gc[0], 1.0);
}

// Central differences with h = 1e-6 max(1, |b_j|) at 1000 random points per family.
TEST(Models, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& id : builtin_registry().ids()) {
    const ModelSpec& m = *builtin(id);
    int worst_fail = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const double x = 4.0 * u(rng);
      Vector b(m.p);
      for (int j = 0; j < m.p; ++j) {
        // Working range: |b_j| <= 10, scale parameters log-uniform on [0.5, upper].
        // Near b3 = 0.1 exp(x/b3) reaches 1e17 and the difference quotient in b1
        // is pure rounding noise.
        const double hi = m.box.upper[j];
        b[j] = m.box.lower[j] > 0 ? std::exp(std::log(0.5) + u(rng) * (std::log(hi) - std::log(0.5))) : -10 + 20 * u(rng);
      }
      const Vector g = eval_gradient(m, x, b);
      for (int j = 0; j < m.p; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(b[j]));
        Vector bp = b, bm = b;
        bp[j] += h;
        bm[j] -= h;
        const double fd = (m.eval(x, bp) - m.eval(x, bm)) / (2 * h);
        const double scale = std::max({1.0, std::abs(g[j]), std::abs(fd)});
        if (std::abs(fd - g[j]) > 1e-4 * scale) ++worst_fail;
        ASSERT_TRUE(std::isfinite(g[j])) << id;
      }
    }
    EXPECT_EQ(worst_fail, 0) << id;
  }
}

TEST(Models, EmaxFirstGradientEntryIsOne) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Vector b = vec({u(rng) * 10 - 5, u(rng) * 10 - 5, 0.01 + u(rng) * 10});
    EXPECT_EQ(eval_gradient(*builtin("emax"), 4 * u(rng), b)[0], 1.0);
  }
}

TEST(Models, Errors) {
  EXPECT_THROW(
      {
        try {
          eval_model(*builtin("emax"), 1.0, vec({1, 2}));
        } catch (const Error& e) {
          EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
          throw;
        }
      },
      Error);
  try {
    eval_model(*builtin("emax"), 1.0, vec({0, 1, -0.5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DomainError);
  }
  try {
    eval_model(*builtin("exponential"), 1.0, vec({0, 1, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DomainError);
  }
  try {
    builtin("unknown");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotFound);
  }
}

TEST(Models, Registry) {
  auto reg = builtin_registry();
  EXPECT_EQ(reg.lookup("emax")->p, 3);
  EXPECT_EQ(reg.lookup("linear")->p, 2);
  EXPECT_EQ(reg.ids().size(), 5u);
  try {
    reg.add(make_builtin(BuiltinFamily::Linear));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateId);
  }
}

TEST(Models, UserModelFallsBackToFiniteDifferences) {
  ModelSpec s;
  s.id = "logistic";
  s.p = 2;
  s.eval = [](double x, const Vector& b) { return 1.0 / (1.0 + std::exp(-(b[0] + b[1] * x))); };
  s.box = {vec({-10, -10}), vec({10, 10})};
  ModelRegistry reg = builtin_registry();
  reg.add(s);
  const ModelPtr m = reg.lookup("logistic");
  EXPECT_TRUE(m->numeric_gradient());
  const Vector b = vec({0.3, -0.8});
  const Vector g = eval_gradient(*m, 1.5, b);
  const double p = m->eval(1.5, b);
  EXPECT_NEAR(g[0], p * (1 - p), 1e-8);
  EXPECT_NEAR(g[1], 1.5 * p * (1 - p), 1e-8);
}
