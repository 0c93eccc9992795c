#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "divchain/cantor.hpp"
#include "divchain/expr.hpp"
#include "divchain/quadrature.hpp"

using namespace divchain;

TEST(Quadrature, PolynomialExact) {
  QuadConfig cfg;
  auto r = integrate([](double x) { return x * x * x - 2 * x + 1; }, -1.0, 2.0, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value, 3.75 - 3.0 + 3.0, 1e-13);
}

TEST(Quadrature, ReversedLimitsFlipSign) {
  QuadConfig cfg;
  auto a = integrate([](double x) { return std::exp(x); }, 0.0, 1.0, cfg);
  auto b = integrate([](double x) { return std::exp(x); }, 1.0, 0.0, cfg);
  EXPECT_DOUBLE_EQ(a.value, -b.value);
  EXPECT_NEAR(a.value, std::exp(1.0) - 1.0, 1e-12);
}

TEST(Quadrature, BreakpointsHandleJumps) {
  QuadConfig cfg;
  auto f = [](double x) { return x < 0.3 ? 1.0 : -2.0 * x; };
  auto r = integrate(f, 0.0, 1.0, cfg, {0.3});
  EXPECT_NEAR(r.value, 0.3 - (1.0 - 0.09), 1e-13);
  EXPECT_LT(r.evaluations, 100);
}

TEST(Quadrature, AdaptsToKinkWithoutBreaks) {
  QuadConfig cfg;
  auto r = integrate([](double x) { return std::abs(x - 0.123); }, 0.0, 1.0, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value, 0.5 * (0.123 * 0.123 + 0.877 * 0.877), 1e-10);
}

TEST(Quadrature, ErrorEstimateBoundsActualError) {
  QuadConfig cfg;
  cfg.abs_tol = 1e-6;
  auto r = integrate([](double x) { return std::sqrt(x); }, 0.0, 1.0, cfg);
  EXPECT_LE(std::abs(r.value - 2.0 / 3.0), r.error + 1e-15);
}

TEST(Quadrature, DiscIndicatorIn2D) {
  QuadConfig cfg;
  Box box{2, {Interval{-1, 1}, Interval{-1, 1}}};
  auto circle = Component::circle({0.1, -0.2}, 0.5);
  auto r = integrate2d(
      [](const Point& p) { return std::hypot(p[0] - 0.1, p[1] + 0.2) < 0.5 ? 1.0 : 0.0; }, box, {circle}, cfg);
  EXPECT_NEAR(r.value, std::numbers::pi * 0.25, 1e-9);
}

TEST(Quadrature, CrossingSegmentsIn2D) {
  QuadConfig cfg;
  Box box{2, {Interval{0, 1}, Interval{0, 1}}};
  auto s1 = Component::segment({0, 0}, {1, 1});
  auto s2 = Component::segment({0, 1}, {1, 0});
  auto f = [](const Point& p) { return (p[1] > p[0] ? 1.0 : 0.0) + (p[1] > 1 - p[0] ? 2.0 : 0.0); };
  auto r = integrate2d(f, box, {s1, s2}, cfg);
  EXPECT_NEAR(r.value, 0.5 + 1.0, 1e-10);
}

TEST(Quadrature, ScanRootsFindsAll) {
  std::vector<double> roots;
  scan_roots([](double x) { return std::sin(5 * x); }, 0.1, 3.0, 64, roots);
  ASSERT_EQ(roots.size(), 4u);
  for (std::size_t i = 0; i < roots.size(); ++i) EXPECT_NEAR(roots[i], (i + 1) * std::numbers::pi / 5, 1e-12);
}

TEST(Cantor, StandardSymmetry) {
  auto c = CantorSpec::standard();
  auto r = cantor_integrate(c, [](double x) { return x; });
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value, 0.5, 1e-14);
}

TEST(Cantor, SecondMomentMatchesSelfSimilarity) {
  // variance 1/8 plus squared mean 1/4
  auto c = CantorSpec::standard();
  auto r = cantor_integrate(c, [](double x) { return x * x; });
  EXPECT_NEAR(r.value, 3.0 / 8.0, 1e-9);
}

TEST(Cantor, GeometricConvergenceForLipschitzIntegrand) {
  auto c = CantorSpec::standard();
  auto f = [](double x) { return std::sin(3 * x) + x * x; };
  double prev_diff = INFINITY;
  for (int d = 3; d < 10; ++d) {
    const double diff = std::abs(cantor_integrate_at_depth(c, f, d + 1) - cantor_integrate_at_depth(c, f, d));
    EXPECT_LT(diff, prev_diff);
    prev_diff = diff;
  }
}

TEST(Cantor, CdfMatchesCantorFunction) {
  auto c = CantorSpec::standard();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-0.2, 1.2);
  for (int i = 0; i < 200; ++i) {
    const double x = U(rng);
    EXPECT_NEAR(cantor_cdf(c, x), cantor_function(x), 1e-12);
  }
  EXPECT_DOUBLE_EQ(cantor_function(0.5), 0.5);
  EXPECT_NEAR(cantor_function(0.25), 1.0 / 3.0, 1e-15);
}

TEST(Cantor, RestrictedIntegralUsesCdf) {
  CantorSpec c;
  c.a = -1.0;
  c.b = 2.0;
  c.ratio = 0.25;
  c.weights = {0.2, 0.5, 0.3};
  c.validate();
  auto r = cantor_integrate(c, [](double) { return 1.0; }, 0.1, 1.3);
  EXPECT_NEAR(r.value, cantor_cdf(c, 1.3) - cantor_cdf(c, 0.1), 1e-6);
}

TEST(Cantor, ValidationRejectsBadWeights) {
  CantorSpec c;
  c.weights = {0.5, 0.6};
  EXPECT_THROW(c.validate(), Error);
  c.weights = {0.5, 0.5};
  c.ratio = 0.6;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Expr, ParsesPrecedence) {
  auto e = Expr::parse("1 + 2*x^2 - -3/t");
  EXPECT_DOUBLE_EQ(e(3.0, 0.0, 1.5), 1 + 18 + 2);
  EXPECT_DOUBLE_EQ(Expr::parse("2^3^2")(0.0), 512.0);
  EXPECT_DOUBLE_EQ(Expr::parse("-x^2")(3.0), -9.0);
}

TEST(Expr, Functions) {
  EXPECT_DOUBLE_EQ(Expr::parse("H(x)")(0.0), 0.5);
  EXPECT_DOUBLE_EQ(Expr::parse("sign(x)")(0.0), 0.0);
  EXPECT_DOUBLE_EQ(Expr::parse("min(x, y) + max(x, y)")(1.0, 4.0), 5.0);
  EXPECT_NEAR(Expr::parse("Cantor(x)")(0.75), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(Expr::parse("sin(pi/2) + exp(0) + log(1) + sqrt(4) + abs(-1)")(0.0), 5.0, 1e-15);
}

TEST(Expr, ErrorsCarryColumn) {
  try {
    Expr::parse("1 + foo(x)");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("column 5"), std::string::npos);
  }
  EXPECT_THROW(Expr::parse("(x + 1"), Error);
  EXPECT_THROW(Expr::parse("x +"), Error);
  EXPECT_THROW(Expr::parse("min(x)"), Error);
  EXPECT_THROW(Expr::parse("2 $ x"), Error);
}

TEST(Expr, DerivativeMatchesFiniteDifferences) {
  const char* srcs[] = {"sin(x*t) + x^3", "exp(-x^2)*cos(2*x)", "sqrt(1 + x^2)/(2 + t)", "log(2 + sin(x))",
                        "abs(x - 0.3)*x", "x^t", "min(x, 0.5) + max(x^2, 0.1)", "sign(x)*(1 + x^2)"};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  for (const char* s : srcs) {
    auto e = Expr::parse(s);
    auto d = e.diff(Var::X);
    for (int i = 0; i < 20; ++i) {
      const double x = U(rng), t = 1.0 + U(rng);
      const double h = 1e-6;
      const double fd = (e(x + h, 0, t) - e(x - h, 0, t)) / (2 * h);
      EXPECT_NEAR(d(x, 0, t), fd, 1e-6 * (1 + std::abs(fd))) << s << " at " << x;
    }
  }
}

TEST(Expr, PiecewiseConstantsDifferentiateToZero) {
  EXPECT_TRUE(Expr::parse("H(x) + sign(x) + Cantor(x)").diff(Var::X).is_zero());
  EXPECT_FALSE(Expr::parse("x*H(x)").diff(Var::X).is_zero());
  EXPECT_TRUE(Expr::parse("x + y").depends_on(Var::Y));
  EXPECT_FALSE(Expr::parse("x + y").depends_on(Var::T));
}
