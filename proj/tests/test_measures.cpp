#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "divchain/measures.hpp"

using namespace divchain;

namespace {

// Reference quadrature for 1D measures: plain composite Simpson on a fine grid.
double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST(TestFunctionFamily, GradientMatchesCentralDifferences) {
  std::vector<TestFunction> fs = {
      TestFunction::plateau_1d(0.1, 0.2, 0.5), TestFunction::plateau_1d(-0.3, 0.0, 0.4, 2.0),
      TestFunction::plateau_1d(0.0, 0.1, 0.3).oscillating(7.0, {1, 0}, 0.4),
      TestFunction::tensor_2d({0.1, -0.2}, {0.1, 0.2}, {0.4, 0.5}),
      TestFunction::radial_2d({0.2, 0.1}, 0.1, 0.6),
      TestFunction::radial_2d({0.0, 0.0}, 0.2, 0.5).oscillating(5.0, {1, 2}, 0.3)};
  std::mt19937_64 rng(3);
  for (const auto& f : fs) {
    const Box b = f.support_box();
    std::uniform_real_distribution<double> X(b.axis[0].lo - 0.1, b.axis[0].hi + 0.1);
    std::uniform_real_distribution<double> Y(b.dim == 2 ? b.axis[1].lo - 0.1 : 0.0, b.dim == 2 ? b.axis[1].hi + 0.1 : 0.0);
    const double scale = b.diameter();
    for (int i = 0; i < 300; ++i) {
      const Point p{X(rng), Y(rng)};
      const double h = 1e-6;
      for (int ax = 0; ax < b.dim; ++ax) {
        Point a = p, c = p;
        a[ax] -= h;
        c[ax] += h;
        const double fd = (f.value(c) - f.value(a)) / (2 * h);
        EXPECT_NEAR(f.grad(p)[ax], fd, 1e-6 * std::max(1.0, scale) * 10);
      }
      if (!b.contains(p)) {
        EXPECT_EQ(f.value(p), 0.0);
      }
    }
  }
}

TEST(MeasureApply, LebesgueAgainstPlateauBump) {
  auto d = Domain::interval(0, 1);
  auto mu = RadonMeasure::lebesgue(d);
  auto phi = TestFunction::plateau_1d(0.5, 0.2, 0.3);
  const double ref = simpson([&](double x) { return phi.value({x, 0}); }, 0.2, 0.8);
  EXPECT_NEAR(measure_apply(mu, phi), ref, 1e-10);
  // the quintic ramps are symmetric, so the integral is the midpoint width
  EXPECT_NEAR(measure_apply(mu, phi), 0.5, 1e-12);
}

TEST(MeasureApply, DiracEvaluates) {
  auto d = Domain::interval(-1, 1);
  auto mu = RadonMeasure::dirac(d, 0.0);
  auto phi = TestFunction::plateau_1d(0.15, 0.05, 0.3).oscillating(3.0);
  EXPECT_DOUBLE_EQ(measure_apply(mu, phi), phi.value({0.0, 0.0}));
}

TEST(MeasureApply, CantorSymmetry) {
  auto d = Domain::interval(-1, 2);
  auto mu = RadonMeasure::cantor_measure(d, CantorSpec::standard());
  TestFunction phi = TestFunction::plateau_1d(0.5, 0.6, 1.2);
  // phi equals 1 on [-0.1, 1.1]; use x * phi through the density instead of a linear test function
  RadonMeasure xmu(d);
  xmu.cantor.push_back(CantorComponent{CantorSpec::standard(), [](double x) { return x; }});
  EXPECT_NEAR(measure_apply(xmu, phi), 0.5, 1e-12);
  EXPECT_NEAR(measure_apply(mu, phi), 1.0, 1e-14);
}

TEST(MeasureApply, SupportOutsideDomainIsRejected) {
  auto mu = RadonMeasure::lebesgue(Domain::interval(0, 1));
  try {
    measure_apply(mu, TestFunction::plateau_1d(0.9, 0.05, 0.2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DomainMismatch);
  }
}

TEST(MeasureApply, Linearity) {
  auto d = Domain::interval(-1, 1);
  auto m1 = RadonMeasure::density(d, [](const Point& p) { return std::sin(3 * p[0]) + (p[0] > 0.2 ? 1 : 0); },
                                  {Component::point(0.2)}) +
            RadonMeasure::dirac(d, -0.1, 0.7);
  auto m2 = RadonMeasure::cantor_measure(d, CantorSpec::standard(), -1.3) + RadonMeasure::lebesgue(d, 0.4);
  const double a = 2.5, b = -0.75;
  auto comb = m1.scaled(a) + m2.scaled(b);
  for (auto phi : {TestFunction::plateau_1d(0.0, 0.3, 0.6), TestFunction::plateau_1d(0.3, 0.1, 0.5).oscillating(4)}) {
    const double lhs = measure_apply(comb, phi);
    const double rhs = a * measure_apply(m1, phi) + b * measure_apply(m2, phi);
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(MeasureApply, PartOrthogonality) {
  auto d = Domain::interval(-1, 1);
  auto ac = RadonMeasure::density(d, [](const Point& p) { return 1 + p[0] * p[0]; });
  auto mu = ac + RadonMeasure::dirac(d, 0.0, 5.0);
  auto phi = TestFunction::plateau_1d(-0.5, 0.1, 0.3);
  EXPECT_NEAR(measure_apply(mu, phi), measure_apply(ac, phi), 1e-15);
}

TEST(MeasureApply, SurfaceMeasureOnCircle) {
  auto d = Domain::rect(-1, 1, -1, 1);
  RectifiableSet s;
  s.dim = 2;
  s.comps.push_back(Component::circle({0, 0}, 0.5));
  auto mu = RadonMeasure::surface(d, s, [](const SetPoint& p) { return 1.0 + p.x[0]; });
  auto phi = TestFunction::radial_2d({0, 0}, 0.6, 0.9);
  EXPECT_NEAR(measure_apply(mu, phi), 2 * std::numbers::pi * 0.5, 1e-10);
}

TEST(TotalVariation, Examples) {
  auto d = Domain::interval(-1, 1);
  EXPECT_NEAR(total_variation(RadonMeasure::dirac(d, 0.0, -2.0)), 2.0, 1e-15);
  EXPECT_NEAR(total_variation(RadonMeasure::density(d, [](const Point& p) { return sgn(p[0]); },
                                                    {Component::point(0.0)})),
              2.0, 1e-12);
  EXPECT_NEAR(total_variation(RadonMeasure::cantor_measure(d, CantorSpec::standard(), -3.0)), 3.0, 1e-12);
}

TEST(TotalVariation, MergesCoincidingParts) {
  auto d = Domain::interval(-1, 1);
  auto mu = RadonMeasure::dirac(d, 0.0, 1.0) + RadonMeasure::dirac(d, 0.0, -1.0);
  EXPECT_NEAR(total_variation(mu), 0.0, 1e-15);
}

TEST(TotalVariation, RestrictedToSubBoxesAddsUp) {
  auto d = Domain::rect(0, 1, 0, 1);
  RectifiableSet s;
  s.dim = 2;
  s.comps.push_back(Component::segment({0.1, 0.2}, {0.9, 0.7}));
  auto mu = RadonMeasure::surface(d, s, [](const SetPoint& p) { return std::cos(5 * p.x[0]); }) +
            RadonMeasure::density(d, [](const Point& p) { return p[0] - p[1]; });
  double sum = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      Box b{2, {Interval{i / 4.0, (i + 1) / 4.0}, Interval{j / 4.0, (j + 1) / 4.0}}};
      sum += total_variation(mu, b);
    }
  EXPECT_NEAR(sum, total_variation(mu), 1e-8);
}

TEST(Lub, Examples) {
  auto d = Domain::interval(0, 1);
  auto l = lub_measures({RadonMeasure::lebesgue(d, 1.0), RadonMeasure::lebesgue(d, 2.0)});
  EXPECT_NEAR(total_variation(l), 2.0, 1e-12);
  auto d2 = Domain::interval(-1, 1);
  auto l2 = lub_measures({RadonMeasure::dirac(d2, 0.0), RadonMeasure::dirac(d2, 0.0, 3.0)});
  EXPECT_NEAR(measure_apply(l2, TestFunction::plateau_1d(0, 0.1, 0.2)), 3.0, 1e-15);
  auto l3 = lub_measures({RadonMeasure::density(d2, [](const Point& p) { return sgn(p[0]); }),
                          RadonMeasure::density(d2, [](const Point& p) { return 1 - std::abs(p[0]); })});
  EXPECT_NEAR(l3.ac({0.3, 0}), 1.0, 1e-15);
  EXPECT_NEAR(total_variation(l3), 2.0, 1e-9);
}

TEST(Lub, DominatesEachMemberOnSubBoxes) {
  auto d = Domain::interval(-1, 1);
  std::vector<RadonMeasure> fam;
  for (double t : {0.5, 1.0, 1.5})
    fam.push_back(RadonMeasure::density(d, [t](const Point& p) { return std::sin(t * 4 * p[0]); }) +
                  RadonMeasure::dirac(d, 0.25, -t) +
                  RadonMeasure::cantor_measure(d, CantorSpec::standard(), t * (t - 1)));
  auto l = lub_measures(fam);
  for (int i = 0; i < 4; ++i) {
    Box b{1, {Interval{-1 + 0.5 * i, -0.5 + 0.5 * i}, Interval{}}};
    for (const auto& m : fam) EXPECT_GE(total_variation(l, b) + 1e-12, total_variation(m, b));
  }
}

TEST(Lub, MisalignedSupportsRejected) {
  auto d = Domain::rect(0, 1, 0, 1);
  RectifiableSet a, b;
  a.dim = b.dim = 2;
  a.comps.push_back(Component::segment({0.5, 0.0}, {0.5, 1.0}));
  b.comps.push_back(Component::segment({0.5, 0.2}, {0.5, 0.6}));
  auto one = [](const SetPoint&) { return 1.0; };
  try {
    lub_measures({RadonMeasure::surface(d, a, one), RadonMeasure::surface(d, b, one)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedStructure);
  }
  CantorSpec other;
  other.ratio = 0.25;
  EXPECT_THROW(lub_measures({RadonMeasure::cantor_measure(Domain::interval(0, 1), CantorSpec::standard()),
                             RadonMeasure::cantor_measure(Domain::interval(0, 1), other)}),
               Error);
}

TEST(RadonNikodym, Examples) {
  auto d = Domain::interval(-1, 1);
  auto r1 = radon_nikodym(RadonMeasure::dirac(d, 0.0, 3.0), RadonMeasure::dirac(d, 0.0));
  EXPECT_DOUBLE_EQ(r1.jump(0, {0.0, 0.0}), 3.0);
  auto d01 = Domain::interval(0, 1);
  auto r2 = radon_nikodym(RadonMeasure::density(d01, [](const Point& p) { return p[0]; }), RadonMeasure::lebesgue(d01));
  EXPECT_DOUBLE_EQ(r2.at({0.3, 0}), 0.3);
  auto r3 = radon_nikodym(RadonMeasure::cantor_measure(d01, CantorSpec::standard(), 0.5),
                          RadonMeasure::cantor_measure(d01, CantorSpec::standard()));
  EXPECT_DOUBLE_EQ(r3.cantor(0.1), 0.5);
}

TEST(RadonNikodym, ReconstructsMeasure) {
  auto d = Domain::interval(-1, 1);
  auto sigma = RadonMeasure::lebesgue(d, 2.0) + RadonMeasure::dirac(d, 0.3, 4.0) +
               RadonMeasure::cantor_measure(d, CantorSpec::standard(), 1.0);
  auto mu = RadonMeasure::density(d, [](const Point& p) { return p[0] * p[0]; }) + RadonMeasure::dirac(d, 0.3, -1.0);
  auto rho = radon_nikodym(mu, sigma);
  auto back = times(rho, sigma);
  for (auto phi : {TestFunction::plateau_1d(0.2, 0.2, 0.5), TestFunction::plateau_1d(-0.2, 0.1, 0.6).oscillating(3)})
    EXPECT_NEAR(measure_apply(back, phi), measure_apply(mu, phi), 1e-10);
}

TEST(RadonNikodym, ViolationRaised) {
  auto d = Domain::interval(-1, 1);
  try {
    radon_nikodym(RadonMeasure::dirac(d, 0.0), RadonMeasure::lebesgue(d));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AbsoluteContinuity);
  }
  EXPECT_THROW(radon_nikodym(RadonMeasure::lebesgue(d), RadonMeasure::dirac(d, 0.0)), Error);
}

TEST(BallMeasure, DiracLebesgueAndSurface) {
  auto d = Domain::interval(-1, 1);
  EXPECT_DOUBLE_EQ(measure_of_ball(RadonMeasure::dirac(d, 0.0), {0.0, 0.0}, 1e-3), 1.0);
  EXPECT_NEAR(measure_of_ball(RadonMeasure::lebesgue(d), {0.0, 0.0}, 1e-2), 2e-2, 1e-14);
  auto d2 = Domain::rect(-1, 1, -1, 1);
  RectifiableSet s;
  s.dim = 2;
  s.comps.push_back(Component::segment({0, -1}, {0, 1}));
  auto mu = RadonMeasure::surface(d2, s, [](const SetPoint&) { return 1.0; });
  EXPECT_NEAR(measure_of_ball(mu, {0.0, 0.3}, 0.1), 0.2, 1e-10);
}
