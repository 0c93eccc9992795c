#include <gtest/gtest.h>

#include <cmath>

#include "divchain/dmfield.hpp"

using namespace divchain;

namespace {

RectifiableSet origin() {
  RectifiableSet s;
  s.dim = 1;
  s.comps.push_back(Component::point(0.0));
  return s;
}

ParamField sign_times_t() {
  ParamField b;
  b.domain = Domain::interval(-1, 1);
  b.eval = [](const Point& x, double t) { return Vec{sgn(x[0]) * t, 0.0}; };
  b.sup_bound = 2.0;
  b.singular_set = origin();
  b.diva = [](const Point&, double) { return 0.0; };
  return b;
}

ParamField sign_field(double scale_t = 0.0) {
  ParamField b;
  b.domain = Domain::interval(-1, 1);
  b.eval = [scale_t](const Point& x, double t) { return Vec{sgn(x[0]) * (scale_t == 0.0 ? 1.0 : scale_t * t), 0.0}; };
  b.sup_bound = 4.0;
  b.singular_set = origin();
  b.diva = [](const Point&, double) { return 0.0; };
  return b;
}

// -int b(., t) . grad phi, computed without the decomposition
double weak_div(const ParamField& b, double t, const TestFunction& phi) {
  auto br = b.singular_curves();
  auto pb = phi.breaks();
  br.insert(br.end(), pb.begin(), pb.end());
  QuadConfig cfg;
  cfg.abs_tol = b.dim() == 1 ? 1e-13 : 1e-11;
  return -integrate_box([&](const Point& p) { return dot(b.eval(p, t), phi.grad(p), b.dim()); }, phi.support_box(),
                        br, cfg)
              .value;
}

}  // namespace

TEST(Sigma, SignTimesT) {
  auto b = sign_times_t();
  // brute force: |Div b(., t)| at 0 read off the weak form with a plateau bump equal to 1 near 0
  auto bump = TestFunction::plateau_1d(0.0, 0.1, 0.5);
  double brute = 0.0;
  for (double t : {0.0, 1.0, 2.0}) brute = std::max(brute, std::abs(weak_div(b, t, bump)));
  EXPECT_NEAR(brute, 4.0, 1e-10);
  auto sigma = sigma_of(b, {0.0, 1.0, 2.0});
  EXPECT_NEAR(measure_apply(sigma, bump), brute, 1e-10);
  EXPECT_NEAR(total_variation(sigma), 4.0, 1e-12);
}

TEST(Sigma, XIndependentFieldHasNoDivergence) {
  ParamField b;
  b.domain = Domain::rect(-1, 1, -1, 1);
  b.eval = [](const Point&, double t) { return Vec{std::sin(t), t}; };
  b.diva = [](const Point&, double) { return 0.0; };
  b.sup_bound = 3.0;
  EXPECT_NEAR(total_variation(sigma_of(b, {-1.0, 0.5, 2.0})), 0.0, 1e-14);
}

TEST(Sigma, SignField) {
  auto sigma = sigma_of(sign_field(), {0.0, 3.0});
  EXPECT_NEAR(total_variation(sigma), 2.0, 1e-14);
}

TEST(Sigma, DominatesSampledDivergences) {
  ParamField b;
  b.domain = Domain::interval(-1, 1);
  b.eval = [](const Point& x, double t) { return Vec{t * x[0] * x[0] + (x[0] > 0.3 ? t * t : 0.0), 0.0}; };
  b.diva = [](const Point& x, double t) { return 2 * t * x[0]; };
  b.singular_set.dim = 1;
  b.singular_set.comps.push_back(Component::point(0.3));
  b.sup_bound = 6;
  const std::vector<double> ts{-1.5, -0.2, 0.7, 1.3};
  auto sigma = sigma_of(b, ts);
  for (double t : ts)
    for (auto box : {Box{1, {Interval{-1, 0}, {}}}, Box{1, {Interval{0, 0.5}, {}}}, Box{1, {Interval{0.5, 1}, {}}}})
      EXPECT_GE(total_variation(sigma, box) + 1e-12, total_variation(div_decomposition(b, t), box));
}

TEST(SingularSet, Examples) {
  auto b1 = sign_field();
  auto r1 = singular_set_check(b1, RadonMeasure::dirac(b1.domain, 0.0));
  EXPECT_TRUE(r1.ok);
  ASSERT_FALSE(r1.samples.empty());
  EXPECT_TRUE(r1.samples.front().declared);
  EXPECT_NEAR(r1.samples.front().ratio[2], 1.0, 1e-14);

  ParamField b2;
  b2.domain = Domain::interval(-1, 1);
  auto r2 = singular_set_check(b2, RadonMeasure::lebesgue(b2.domain));
  EXPECT_TRUE(r2.ok);
  for (const auto& s : r2.samples) EXPECT_NEAR(s.ratio[2], 2e-3, 1e-12);

  ParamField b3;
  b3.domain = Domain::rect(-1, 1, -1, 1);
  b3.singular_set.dim = 2;
  b3.singular_set.comps.push_back(Component::segment({0, -1}, {0, 1}));
  auto r3 = singular_set_check(b3, RadonMeasure::surface(b3.domain, b3.singular_set, [](const SetPoint&) { return 1.0; }));
  EXPECT_TRUE(r3.ok);
  for (const auto& s : r3.samples)
    if (s.declared) {
      EXPECT_NEAR(s.ratio[2], 2.0, 1e-9);
    }
}

TEST(SingularSet, ReportsUndeclaredAndSpuriousComponents) {
  auto b = sign_field();
  b.singular_set.comps.clear();
  auto rep = singular_set_check(b, RadonMeasure::dirac(b.domain, 1.0 / 9.0) + RadonMeasure::lebesgue(b.domain));
  EXPECT_FALSE(rep.ok);
  auto b2 = sign_field();
  auto rep2 = singular_set_check(b2, RadonMeasure::lebesgue(b2.domain));
  EXPECT_FALSE(rep2.ok);
  EXPECT_EQ(rep2.violations, 1);
}

TEST(SingularSet, CantorPartIsNotSingular) {
  ParamField b;
  b.domain = Domain::interval(-0.5, 1.5);
  auto sigma = RadonMeasure::cantor_measure(b.domain, CantorSpec::standard());
  auto rep = singular_set_check(b, sigma, 27);
  EXPECT_TRUE(rep.ok);
}

TEST(Primitive, Autonomous) {
  ParamField b;
  b.domain = Domain::interval(-1, 1);
  b.eval = [](const Point&, double t) { return Vec{2 * t, 0.0}; };
  auto B = primitive(b);
  for (double t : {-1.5, 0.0, 0.3, 2.0}) EXPECT_NEAR(B.value({0.2, 0}, t)[0], t * t, 1e-13);
}

TEST(Primitive, SignTraces) {
  auto B = primitive(sign_field(2.0));
  const SetPoint sp = B.field().singular_set.sample(0, 0.0);
  for (double t : {-1.0, 0.5, 1.7}) {
    EXPECT_NEAR(B.plus(sp, t)[0], t * t, 1e-13);
    EXPECT_NEAR(B.minus(sp, t)[0], -t * t, 1e-13);
    EXPECT_NEAR(B.star(sp, t)[0], 0.0, 1e-13);
  }
}

TEST(Primitive, DivergenceMatchesWeakForm) {
  auto b = sign_field();
  auto B = primitive(b);
  ParamField Bt;
  Bt.domain = b.domain;
  Bt.singular_set = b.singular_set;
  Bt.eval = [&](const Point& x, double t) { return B.value(x, t); };
  for (double t : {0.5, 1.0, 2.0})
    for (auto phi : {TestFunction::plateau_1d(0.0, 0.1, 0.5), TestFunction::plateau_1d(0.2, 0.1, 0.4).oscillating(4.0)}) {
      const double weak = weak_div(Bt, t, phi);
      EXPECT_NEAR(measure_apply(B.divergence(t), phi), weak, 1e-10);
      EXPECT_NEAR(weak, 2 * t * phi.value({0, 0}), 1e-10);
    }
}

TEST(Primitive, TimeDerivativeAndAbsoluteContinuity) {
  ParamField b;
  b.domain = Domain::rect(-1, 1, -1, 1);
  b.eval = [](const Point& x, double t) {
    const double s = x[0] > 0.2 ? 1.0 : -0.5;
    return Vec{s * std::cos(t) + x[1] * t, x[0] * t * t};
  };
  b.diva = [](const Point&, double) { return 0.0; };
  b.singular_set.dim = 2;
  b.singular_set.comps.push_back(Component::segment({0.2, -1}, {0.2, 1}, -1));
  b.sup_bound = 10;
  auto B = primitive(b);
  for (const Point& x : {Point{0.5, 0.3}, Point{-0.4, -0.7}}) {
    EXPECT_EQ(B.value(x, 0.0)[0], 0.0);
    for (double t : {-0.7, 0.4, 1.1}) {
      const double h = 1e-5;
      const Vec fd = (1.0 / (2 * h)) * (B.value(x, t + h) - B.value(x, t - h));
      EXPECT_NEAR(fd[0], b.eval(x, t)[0], 1e-8);
      EXPECT_NEAR(fd[1], b.eval(x, t)[1], 1e-8);
    }
  }
  const std::vector<double> ts{-1.0, -0.3, 0.4, 1.0};
  auto sigma = sigma_of(b, ts);
  for (double t : {-0.8, 0.6}) EXPECT_NO_THROW(radon_nikodym(B.divergence(t), sigma));
  auto osc = primitive_oscillation(B, 0.8);
  ASSERT_EQ(osc.half_ball.size(), 2u);
  EXPECT_LT(osc.half_ball[1], osc.half_ball[0]);
  EXPECT_LT(osc.half_ball[1], 2e-3);
  EXPECT_LT(osc.full_ball[1], 2e-3);
}

TEST(Decomposition, Examples) {
  auto b = sign_field();
  auto d = div_decomposition(b, 0.7);
  EXPECT_NEAR(measure_apply(d, TestFunction::plateau_1d(0.0, 0.1, 0.3)), 2.0, 1e-14);
  EXPECT_EQ(d.jumps.size(), 1u);

  ParamField lin;
  lin.domain = Domain::interval(-1, 1);
  lin.eval = [](const Point& x, double t) { return Vec{x[0] * t, 0.0}; };
  lin.diva = [](const Point&, double t) { return t; };
  auto phi = TestFunction::plateau_1d(0.1, 0.2, 0.6).oscillating(3.0);
  EXPECT_NEAR(measure_apply(div_decomposition(lin, 1.3), phi), weak_div(lin, 1.3, phi), 1e-11);
}

TEST(Decomposition, CantorDivergence) {
  ParamField b;
  b.domain = Domain::interval(-0.5, 1.5);
  b.eval = [](const Point& x, double t) { return Vec{t * cantor_function(x[0]), 0.0}; };
  b.diva = [](const Point&, double) { return 0.0; };
  b.divc = CantorDivergence{CantorSpec::standard(), [](double, double t) { return t; }};
  for (double t : {0.5, -2.0})
    for (auto phi : {TestFunction::plateau_1d(0.5, 0.2, 0.8), TestFunction::plateau_1d(0.3, 0.05, 0.4).oscillating(6.0)}) {
      // depth-12 cell rule for the Cantor side, Holder integrand on the weak side
      const double cells = t * cantor_integrate_at_depth(CantorSpec::standard(), [&](double x) { return phi.value({x, 0}); }, 12);
      EXPECT_NEAR(measure_apply(div_decomposition(b, t), phi), cells, 1e-6);
      EXPECT_NEAR(weak_div(b, t, phi), cells, 1e-6);
    }
}

TEST(Decomposition, JumpDensityIsNormalTraceJump) {
  ParamField b;
  b.domain = Domain::rect(-1, 1, -1, 1);
  b.eval = [](const Point& x, double t) {
    const bool in = x[0] * x[0] + x[1] * x[1] < 0.25;
    return in ? Vec{t * x[0], x[1]} : Vec{-x[1], t * t * x[0]};
  };
  b.diva = [](const Point& x, double t) { return x[0] * x[0] + x[1] * x[1] < 0.25 ? t + 1.0 : 0.0; };
  b.singular_set.dim = 2;
  b.singular_set.comps.push_back(Component::circle({0, 0}, 0.5));
  b.sup_bound = 10;
  for (double t : {-0.5, 1.5}) {
    auto d = div_decomposition(b, t);
    const SetPoint sp = b.singular_set.sample(0, 1.1);
    // outward normal: + side is outside
    const Vec out{-sp.x[1], t * t * sp.x[0]}, in{t * sp.x[0], sp.x[1]};
    EXPECT_NEAR(d.jumps[0].density(sp), dot(out - in, sp.normal, 2), 1e-8);
    for (auto phi : {TestFunction::radial_2d({0.1, 0.2}, 0.2, 0.7), TestFunction::tensor_2d({0.3, 0}, {0.1, 0.2}, {0.6, 0.5})})
      EXPECT_NEAR(measure_apply(d, phi), weak_div(b, t, phi), 1e-8);
  }
}

TEST(Mollifier, Examples) {
  auto s = sign_field();
  for (double eps : {0.3, 0.1}) EXPECT_NEAR(mollified_normal_trace(s, 1.0, {0, 0}, eps), 0.0, 1e-14);
  ParamField h = s;
  h.eval = [](const Point& x, double) { return Vec{x[0] > 0 ? 1.0 : 0.0, 0.0}; };
  for (double eps : {0.3, 0.1, 0.01}) EXPECT_NEAR(mollified_normal_trace(h, 1.0, {0, 0}, eps), 0.5, 1e-12);
  ParamField q = s;
  q.eval = [](const Point& x, double) { return Vec{sgn(x[0]) * (1 + x[0] * x[0]), 0.0}; };
  for (double eps : {0.1, 0.05, 0.025}) {
    // composite Simpson on the two halves of the mollification window
    const int n = 2000;
    double acc = 0.0;
    for (int side : {-1, 1})
      for (int i = 0; i <= n; ++i) {
        const double y = side * eps * i / n;
        const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
        const double r = 1 - (y / eps) * (y / eps);
        acc += w * r * r * q.eval({y, 0}, 0)[0];
      }
    acc *= eps / n / 3.0 / (16.0 / 15.0 * eps);
    EXPECT_NEAR(mollified_normal_trace(q, 0.0, {0, 0}, eps), acc, 1e-10);
    EXPECT_NEAR(acc, 0.0, 1e-12);
  }
}

TEST(Mollifier, TwoDimensionalMeanOfTraces) {
  ParamField b;
  b.domain = Domain::rect(-1, 1, -1, 1);
  b.eval = [](const Point& x, double t) { return x[0] > 0 ? Vec{1.0 + t * x[1], 0.3} : Vec{-0.5 + x[1], 2.0}; };
  b.singular_set.dim = 2;
  b.singular_set.comps.push_back(Component::segment({0, -1}, {0, 1}));
  const Point x{0.0, 0.2};
  const double target = 0.5 * ((1.0 + 0.2) + (-0.5 + 0.2));
  double prev = INFINITY;
  for (double eps : {0.2, 0.1, 0.05}) {
    const double e = std::abs(mollified_normal_trace(b, 1.0, x, eps) - target);
    EXPECT_LE(e, prev + 1e-12);
    prev = e;
  }
  EXPECT_LT(prev, 1e-9);
  try {
    mollified_normal_trace(b, 1.0, {0.0, 0.9}, 0.2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Boundary);
  }
}

TEST(FieldValidation, AcceptsGoodAndFlagsBad) {
  auto b = sign_times_t();
  b.t_modulus = [](double h) { return h; };
  b.lipschitz_div = [](const Point&) { return 0.0; };
  auto rep = validate_field(b, {-1.0, 0.0, 1.5}, 11);
  EXPECT_TRUE(rep.ok) << (rep.issues.empty() ? "" : rep.issues.front());

  auto over = sign_times_t();
  over.sup_bound = 1.0;
  EXPECT_FALSE(validate_field(over, {2.0}, 11).ok);

  auto lie = sign_times_t();
  lie.trace_plus = [](const SetPoint&, double t) { return Vec{-t, 0}; };
  auto rl = validate_field(lie, {1.0}, 11);
  EXPECT_FALSE(rl.ok);
  EXPECT_NEAR(rl.max_trace_mismatch, 2.0, 1e-12);

  ParamField lip;
  lip.domain = Domain::interval(-1, 1);
  lip.eval = [](const Point& x, double t) { return Vec{x[0] * t * t, 0.0}; };
  lip.diva = [](const Point&, double t) { return t * t; };
  lip.lipschitz_div = [](const Point&) { return 1.0; };
  lip.sup_bound = 9;
  auto rlip = validate_field(lip, {0.0, 3.0}, 5);
  EXPECT_FALSE(rlip.ok);
  EXPECT_NEAR(rlip.max_lipschitz_ratio, 3.0, 1e-12);
}
