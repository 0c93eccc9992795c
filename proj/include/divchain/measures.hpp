#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "divchain/cantor.hpp"
#include "divchain/core.hpp"
#include "divchain/geometry.hpp"
#include "divchain/quadrature.hpp"

namespace divchain {

using ScalarField = std::function<double(const Point&)>;
using SurfaceDensity = std::function<double(const SetPoint&)>;

namespace detail {

inline double smoothstep5(double s) { return s * s * s * (10.0 + s * (-15.0 + 6.0 * s)); }
inline double smoothstep5_d(double s) { return 30.0 * s * s * (1.0 - s) * (1.0 - s); }

// Plateau profile: 1 for |d| <= h0, 0 for |d| >= h1, C^2 quintic in between.
inline double profile(double d, double h0, double h1) {
  d = std::abs(d);
  if (d <= h0) return 1.0;
  if (d >= h1) return 0.0;
  return smoothstep5((h1 - d) / (h1 - h0));
}
inline double profile_d(double d, double h0, double h1) {
  const double a = std::abs(d);
  if (a <= h0 || a >= h1) return 0.0;
  return -sgn(d) * smoothstep5_d((h1 - a) / (h1 - h0)) / (h1 - h0);
}

}  // namespace detail

enum class TestKind { Plateau, Tensor, Radial };

/// C^2 compactly supported test function: plateau bump (1D), tensor product of
/// plateau bumps or radial plateau bump (2D), optionally modulated by
/// sin(freq * <dir, x - center> + phase).
struct TestFunction {
  TestKind kind = TestKind::Plateau;
  int dim = 1;
  Point center{};
  std::array<double, 2> plateau{0.0, 0.0};
  std::array<double, 2> support{1.0, 1.0};
  double amplitude = 1.0;
  double freq = 0.0;
  double phase = 0.0;
  Vec dir{1.0, 0.0};
  std::string label;

  static TestFunction plateau_1d(double c, double h0, double h1, double amp = 1.0) {
    if (!(h1 > h0) || h0 < 0.0) throw Error(ErrorKind::Validation, "test function needs 0 <= plateau < support");
    TestFunction f;
    f.kind = TestKind::Plateau;
    f.dim = 1;
    f.center = {c, 0.0};
    f.plateau = {h0, 0.0};
    f.support = {h1, 0.0};
    f.amplitude = amp;
    return f;
  }
  static TestFunction tensor_2d(Point c, std::array<double, 2> h0, std::array<double, 2> h1, double amp = 1.0) {
    for (int i = 0; i < 2; ++i)
      if (!(h1[i] > h0[i]) || h0[i] < 0.0) throw Error(ErrorKind::Validation, "test function needs 0 <= plateau < support");
    TestFunction f;
    f.kind = TestKind::Tensor;
    f.dim = 2;
    f.center = c;
    f.plateau = h0;
    f.support = h1;
    f.amplitude = amp;
    return f;
  }
  static TestFunction radial_2d(Point c, double r0, double r1, double amp = 1.0) {
    if (!(r1 > r0) || r0 < 0.0) throw Error(ErrorKind::Validation, "test function needs 0 <= plateau < support");
    TestFunction f;
    f.kind = TestKind::Radial;
    f.dim = 2;
    f.center = c;
    f.plateau = {r0, r0};
    f.support = {r1, r1};
    f.amplitude = amp;
    return f;
  }
  TestFunction oscillating(double k, Vec d = {1.0, 0.0}, double ph = 0.0) const {
    TestFunction f = *this;
    f.freq = k;
    const double n = dim == 1 ? std::abs(d[0]) : norm(d);
    f.dir = dim == 1 ? Vec{1.0, 0.0} : Vec{d[0] / n, d[1] / n};
    f.phase = ph;
    return f;
  }

  double base(const Point& p) const {
    switch (kind) {
      case TestKind::Plateau: return detail::profile(p[0] - center[0], plateau[0], support[0]);
      case TestKind::Tensor:
        return detail::profile(p[0] - center[0], plateau[0], support[0]) *
               detail::profile(p[1] - center[1], plateau[1], support[1]);
      case TestKind::Radial:
        return detail::profile(std::hypot(p[0] - center[0], p[1] - center[1]), plateau[0], support[0]);
    }
    return 0.0;
  }
  Vec base_grad(const Point& p) const {
    switch (kind) {
      case TestKind::Plateau: return {detail::profile_d(p[0] - center[0], plateau[0], support[0]), 0.0};
      case TestKind::Tensor: {
        const double dx = p[0] - center[0], dy = p[1] - center[1];
        return {detail::profile_d(dx, plateau[0], support[0]) * detail::profile(dy, plateau[1], support[1]),
                detail::profile(dx, plateau[0], support[0]) * detail::profile_d(dy, plateau[1], support[1])};
      }
      case TestKind::Radial: {
        const double dx = p[0] - center[0], dy = p[1] - center[1];
        const double r = std::hypot(dx, dy);
        if (r == 0.0) return {0.0, 0.0};
        const double g = detail::profile_d(r, plateau[0], support[0]);
        return {g * dx / r, g * dy / r};
      }
    }
    return {0.0, 0.0};
  }
  double phase_at(const Point& p) const {
    return freq * (dir[0] * (p[0] - center[0]) + (dim == 2 ? dir[1] * (p[1] - center[1]) : 0.0)) + phase;
  }

  double value(const Point& p) const {
    const double b = base(p);
    if (b == 0.0) return 0.0;
    return freq == 0.0 ? amplitude * b : amplitude * b * std::sin(phase_at(p));
  }
  Vec grad(const Point& p) const {
    const Vec g = base_grad(p);
    if (freq == 0.0) return {amplitude * g[0], amplitude * g[1]};
    const double b = base(p);
    const double s = std::sin(phase_at(p)), c = std::cos(phase_at(p));
    return {amplitude * (g[0] * s + b * c * freq * dir[0]), amplitude * (g[1] * s + b * c * freq * dir[1])};
  }

  Box support_box() const {
    Box b;
    b.dim = dim;
    b.axis[0] = Interval{center[0] - support[0], center[0] + support[0]};
    if (dim == 2) b.axis[1] = Interval{center[1] - support[1], center[1] + support[1]};
    return b;
  }

  /// Curves (points in 1D) across which the profile is only C^2.
  std::vector<Component> breaks() const {
    std::vector<Component> out;
    if (kind == TestKind::Plateau) {
      for (double h : {plateau[0], support[0]}) {
        if (h == 0.0) continue;
        out.push_back(Component::point(center[0] - h));
        out.push_back(Component::point(center[0] + h));
      }
      return out;
    }
    if (kind == TestKind::Radial) {
      if (plateau[0] > 0.0) out.push_back(Component::circle(center, plateau[0]));
      out.push_back(Component::circle(center, support[0]));
      return out;
    }
    const Box b = support_box();
    for (double h : {plateau[0], support[0]}) {
      if (h == 0.0) continue;
      for (double s : {-1.0, 1.0})
        out.push_back(Component::segment({center[0] + s * h, b.axis[1].lo}, {center[0] + s * h, b.axis[1].hi}));
    }
    for (double h : {plateau[1], support[1]}) {
      if (h == 0.0) continue;
      for (double s : {-1.0, 1.0})
        out.push_back(Component::segment({b.axis[0].lo, center[1] + s * h}, {b.axis[0].hi, center[1] + s * h}));
    }
    return out;
  }
};

/// Surface part g * H^{N-1} restricted to a rectifiable set.
struct JumpPart {
  RectifiableSet set;
  SurfaceDensity density;
};

/// Self-similar part rho * mu_spec (1D only); rho is a density against the
/// normalized IFS measure.
struct CantorComponent {
  CantorSpec spec;
  std::function<double(double)> density;
};

/// Signed Radon measure: a.c. density + jump parts + Cantor parts.
struct RadonMeasure {
  Domain domain;
  ScalarField ac;
  std::vector<Component> ac_breaks;
  InnerBreaks ac_extra_breaks;
  std::vector<JumpPart> jumps;
  std::vector<Point> jump_breaks;
  std::vector<CantorComponent> cantor;

  explicit RadonMeasure(Domain d = Domain::interval(0.0, 1.0)) : domain(d) {}

  bool has_ac() const { return static_cast<bool>(ac); }

  static RadonMeasure lebesgue(const Domain& d, double c = 1.0) {
    RadonMeasure m(d);
    m.ac = [c](const Point&) { return c; };
    return m;
  }
  static RadonMeasure density(const Domain& d, ScalarField f, std::vector<Component> breaks = {}) {
    RadonMeasure m(d);
    m.ac = std::move(f);
    m.ac_breaks = std::move(breaks);
    return m;
  }
  static RadonMeasure dirac(const Domain& d, double x, double mass = 1.0) {
    RadonMeasure m(d);
    RectifiableSet s;
    s.dim = 1;
    s.comps.push_back(Component::point(x));
    m.jumps.push_back(JumpPart{s, [mass](const SetPoint&) { return mass; }});
    return m;
  }
  static RadonMeasure surface(const Domain& d, RectifiableSet s, SurfaceDensity g) {
    RadonMeasure m(d);
    m.jumps.push_back(JumpPart{std::move(s), std::move(g)});
    return m;
  }
  static RadonMeasure cantor_measure(const Domain& d, const CantorSpec& spec, double mass = 1.0) {
    RadonMeasure m(d);
    m.cantor.push_back(CantorComponent{spec, [mass](double) { return mass; }});
    return m;
  }

  RadonMeasure scaled(double c) const {
    RadonMeasure m(domain);
    if (ac) {
      auto f = ac;
      m.ac = [f, c](const Point& p) { return c * f(p); };
    }
    m.ac_breaks = ac_breaks;
    m.ac_extra_breaks = ac_extra_breaks;
    m.jump_breaks = jump_breaks;
    for (const auto& j : jumps) {
      auto g = j.density;
      m.jumps.push_back(JumpPart{j.set, [g, c](const SetPoint& p) { return c * g(p); }});
    }
    for (const auto& k : cantor) {
      auto g = k.density;
      m.cantor.push_back(CantorComponent{k.spec, [g, c](double x) { return c * g(x); }});
    }
    return m;
  }
};

inline RadonMeasure operator+(const RadonMeasure& a, const RadonMeasure& b) {
  if (!same_domain(a.domain, b.domain)) throw Error(ErrorKind::DomainMismatch, "measures live on different domains");
  RadonMeasure m(a.domain);
  if (a.ac && b.ac) {
    auto f = a.ac, g = b.ac;
    m.ac = [f, g](const Point& p) { return f(p) + g(p); };
  } else {
    m.ac = a.ac ? a.ac : b.ac;
  }
  m.ac_breaks = a.ac_breaks;
  m.ac_breaks.insert(m.ac_breaks.end(), b.ac_breaks.begin(), b.ac_breaks.end());
  if (a.ac_extra_breaks && b.ac_extra_breaks) {
    auto e1 = a.ac_extra_breaks, e2 = b.ac_extra_breaks;
    m.ac_extra_breaks = [e1, e2](double x, double lo, double hi, std::vector<double>& out) {
      e1(x, lo, hi, out);
      e2(x, lo, hi, out);
    };
  } else {
    m.ac_extra_breaks = a.ac_extra_breaks ? a.ac_extra_breaks : b.ac_extra_breaks;
  }
  m.jumps = a.jumps;
  m.jumps.insert(m.jumps.end(), b.jumps.begin(), b.jumps.end());
  m.jump_breaks = a.jump_breaks;
  m.jump_breaks.insert(m.jump_breaks.end(), b.jump_breaks.begin(), b.jump_breaks.end());
  m.cantor = a.cantor;
  m.cantor.insert(m.cantor.end(), b.cantor.begin(), b.cantor.end());
  return m;
}

inline RadonMeasure operator-(const RadonMeasure& a, const RadonMeasure& b) { return a + b.scaled(-1.0); }

namespace detail {

/// Arc-length parameters where a curve crosses the lines bounding `box`.
inline std::vector<double> box_crossings(const Component& c, const Box& box) {
  std::vector<double> out;
  if (c.shape == Shape::Point) return out;
  const double x0 = box.axis[0].lo, x1 = box.axis[0].hi, y0 = box.axis[1].lo, y1 = box.axis[1].hi;
  for (const auto& edge : {Component::segment({x0, y0}, {x1, y0}), Component::segment({x1, y0}, {x1, y1}),
                           Component::segment({x1, y1}, {x0, y1}), Component::segment({x0, y1}, {x0, y0})})
    for (const auto& p : intersections(c, edge)) out.push_back(c.param_of(p));
  return out;
}

/// Arc-length parameters where a curve crosses the circle |y - x| = r.
inline std::vector<double> ball_crossings(const Component& c, const Point& x, double r) {
  std::vector<double> out;
  if (c.shape == Shape::Point) return out;
  for (const auto& p : intersections(c, Component::circle(x, r))) out.push_back(c.param_of(p));
  return out;
}

/// Arc-length parameters of the listed points that lie on the curve.
inline std::vector<double> params_on(const Component& c, const std::vector<Point>& pts,
                                     std::vector<double> out = {}) {
  if (c.shape == Shape::Point) return out;
  for (const auto& p : pts)
    if (c.distance(p, 2) <= 1e-9 * (1.0 + c.length())) out.push_back(c.param_of(p));
  return out;
}

struct MergedComponent {
  Component geom;
  std::vector<std::pair<const JumpPart*, int>> parts;
};

inline std::vector<MergedComponent> merge_components(const std::vector<JumpPart>& jumps) {
  std::vector<MergedComponent> out;
  for (const auto& j : jumps) {
    for (int i = 0; i < int(j.set.comps.size()); ++i) {
      const auto& c = j.set.comps[std::size_t(i)];
      auto it = std::find_if(out.begin(), out.end(), [&](const MergedComponent& m) { return m.geom.same_geometry(c); });
      if (it == out.end()) {
        out.push_back(MergedComponent{c, {}});
        it = out.end() - 1;
      }
      it->parts.emplace_back(&j, i);
    }
  }
  return out;
}

inline double merged_density(const MergedComponent& m, const Point& x) {
  double g = 0.0;
  for (const auto& [part, idx] : m.parts) {
    const auto& c = part->set.comps[std::size_t(idx)];
    const double s = c.param_of(x);
    g += part->density(part->set.sample(idx, s));
  }
  return g;
}

inline void check_support(const Domain& d, const Box& b) {
  if (b.dim != d.dim() || !d.box.contains(b, 1e-12))
    throw Error(ErrorKind::DomainMismatch, "test function support exceeds the measure's domain");
}

}  // namespace detail

/// Action of a measure on a test function, with an error estimate.
struct MeasureAction {
  double value = 0.0;
  double ac = 0.0, jump = 0.0, cantor = 0.0;
  double error = 0.0;
  bool converged = true;
};

inline MeasureAction measure_action(const RadonMeasure& mu, const TestFunction& phi, const QuadConfig& cfg = {}) {
  detail::check_support(mu.domain, phi.support_box());
  MeasureAction out;
  const Box sb = phi.support_box();
  if (mu.ac) {
    auto br = mu.ac_breaks;
    auto pb = phi.breaks();
    br.insert(br.end(), pb.begin(), pb.end());
    auto r = integrate_box([&](const Point& p) { return phi.value(p) * mu.ac(p); }, sb, br, cfg, mu.ac_extra_breaks);
    out.ac = r.value;
    out.error += r.error;
    out.converged = out.converged && r.converged;
  }
  for (const auto& j : mu.jumps) {
    for (int i = 0; i < int(j.set.comps.size()); ++i) {
      const auto& c = j.set.comps[std::size_t(i)];
      if (c.shape == Shape::Point) {
        const Point x{c.p0[0], 0.0};
        const double v = phi.value(x);
        if (v != 0.0) out.jump += v * j.density(j.set.sample(i, 0.0));
        continue;
      }
      auto r = integrate_component([&](const SetPoint& sp) { return phi.value(sp.x) * j.density(sp); }, j.set, i,
                                   cfg, detail::params_on(c, mu.jump_breaks, detail::box_crossings(c, sb)));
      out.jump += r.value;
      out.error += r.error;
      out.converged = out.converged && r.converged;
    }
  }
  for (const auto& k : mu.cantor) {
    auto r = cantor_integrate(k.spec, [&](double x) { return phi.value({x, 0.0}) * k.density(x); }, sb.axis[0].lo,
                              sb.axis[0].hi);
    out.cantor += r.value;
    out.converged = out.converged && r.converged;
  }
  out.value = out.ac + out.jump + out.cantor;
  return out;
}

/// Integral of phi against mu.
inline double measure_apply(const RadonMeasure& mu, const TestFunction& phi, const QuadConfig& cfg = {}) {
  return measure_action(mu, phi, cfg).value;
}

/// Integral of a bounded function g (not necessarily compactly supported) against mu.
template <class G>
double measure_integrate(const RadonMeasure& mu, G&& g, const QuadConfig& cfg = {}) {
  double total = 0.0;
  if (mu.ac)
    total += integrate_box([&](const Point& p) { return g(p) * mu.ac(p); }, mu.domain.box, mu.ac_breaks, cfg,
                           mu.ac_extra_breaks)
                 .value;
  for (const auto& j : mu.jumps)
    for (int i = 0; i < int(j.set.comps.size()); ++i)
      total += integrate_component([&](const SetPoint& sp) { return g(sp.x) * j.density(sp); }, j.set, i, cfg,
                                   detail::params_on(j.set.comps[std::size_t(i)], mu.jump_breaks))
                   .value;
  for (const auto& k : mu.cantor)
    total += cantor_integrate(k.spec, [&](double x) { return g(Point{x, 0.0}) * k.density(x); }).value;
  return total;
}

/// |mu|(box), or |mu|(domain) when no box is given. Parts sharing a support are
/// merged before taking absolute values.
inline double total_variation(const RadonMeasure& mu, const std::optional<Box>& sub = std::nullopt,
                              const QuadConfig& cfg = {}) {
  const Box box = sub ? *sub : mu.domain.box;
  double tv = 0.0;
  if (mu.ac) {
    const auto& f = mu.ac;
    const auto& inner = mu.ac_extra_breaks;
    const bool two_d = box.dim == 2;
    // |f| has kinks where f changes sign; locate them along each inner line
    InnerBreaks extra = [&](double x, double lo, double hi, std::vector<double>& out) {
      if (inner) inner(x, lo, hi, out);
      if (two_d) scan_roots([&](double y) { return f(Point{x, y}); }, lo, hi, 48, out);
      else scan_roots([&](double y) { return f(Point{y, 0.0}); }, lo, hi, 512, out);
    };
    tv += integrate_box([&](const Point& p) { return std::abs(f(p)); }, box, mu.ac_breaks, cfg, extra).value;
  }
  for (const auto& m : detail::merge_components(mu.jumps)) {
    const auto& c = m.geom;
    if (c.shape == Shape::Point) {
      if (box.axis[0].contains(c.p0[0])) tv += std::abs(detail::merged_density(m, c.p0));
      continue;
    }
    auto params = detail::params_on(c, mu.jump_breaks, detail::box_crossings(c, box));
    {
      // |density| has kinks at its sign changes along the curve
      std::vector<double> roots;
      const double len = c.length();
      std::vector<double> cuts = params;
      cuts.push_back(0.0);
      cuts.push_back(len);
      std::sort(cuts.begin(), cuts.end());
      for (std::size_t q = 0; q + 1 < cuts.size(); ++q)
        if (cuts[q + 1] - cuts[q] > 1e-14 * len)
          scan_roots([&](double s) { return detail::merged_density(m, c.at(s)); }, cuts[q], cuts[q + 1], 64, roots);
      params.insert(params.end(), roots.begin(), roots.end());
    }
    tv += integrate(
              [&](double s) {
                const Point x = c.at(s);
                return box.contains(x) ? std::abs(detail::merged_density(m, x)) : 0.0;
              },
              0.0, c.length(), cfg, params)
              .value;
  }
  std::vector<CantorComponent> merged;
  for (const auto& k : mu.cantor) {
    auto it = std::find_if(merged.begin(), merged.end(), [&](const CantorComponent& o) { return o.spec == k.spec; });
    if (it == merged.end()) {
      merged.push_back(k);
    } else {
      auto f = it->density, g = k.density;
      it->density = [f, g](double x) { return f(x) + g(x); };
    }
  }
  for (const auto& k : merged)
    tv += cantor_integrate(k.spec, [&](double x) { return std::abs(k.density(x)); }, box.axis[0].lo, box.axis[0].hi)
              .value;
  return tv;
}

/// mu(B_r(x) intersected with the domain) for a nonnegative measure.
inline double measure_of_ball(const RadonMeasure& mu, const Point& x, double r, const QuadConfig& cfg = {}) {
  const int dim = mu.domain.dim();
  auto inside = [&](const Point& p) {
    return dim == 1 ? std::abs(p[0] - x[0]) < r : std::hypot(p[0] - x[0], p[1] - x[1]) < r;
  };
  double m = 0.0;
  Box b = mu.domain.box;
  for (int i = 0; i < dim; ++i) {
    b.axis[i].lo = std::max(b.axis[i].lo, x[i] - r);
    b.axis[i].hi = std::min(b.axis[i].hi, x[i] + r);
    if (b.axis[i].hi <= b.axis[i].lo) return 0.0;
  }
  if (mu.ac) {
    auto br = mu.ac_breaks;
    if (dim == 2) br.push_back(Component::circle(x, r));
    m += integrate_box([&](const Point& p) { return inside(p) ? mu.ac(p) : 0.0; }, b, br, cfg, mu.ac_extra_breaks)
             .value;
  }
  for (const auto& j : mu.jumps) {
    for (int i = 0; i < int(j.set.comps.size()); ++i) {
      const auto& c = j.set.comps[std::size_t(i)];
      if (c.shape == Shape::Point) {
        if (inside(c.p0)) m += j.density(j.set.sample(i, 0.0));
        continue;
      }
      m += integrate([&](double s) { return inside(c.at(s)) ? j.density(j.set.sample(i, s)) : 0.0; }, 0.0,
                     c.length(), cfg, detail::params_on(c, mu.jump_breaks, detail::ball_crossings(c, x, r)))
               .value;
    }
  }
  for (const auto& k : mu.cantor)
    m += cantor_integrate(k.spec, [&](double y) { return std::abs(y - x[0]) < r ? k.density(y) : 0.0; }, x[0] - r,
                          x[0] + r)
             .value;
  return m;
}

namespace detail {

inline bool partially_overlap(const Component& a, const Component& b) {
  if (a.same_geometry(b) || a.shape != b.shape || a.shape == Shape::Point) return false;
  if (a.shape == Shape::Segment) {
    const double rx = a.p1[0] - a.p0[0], ry = a.p1[1] - a.p0[1];
    auto cross = [&](const Point& p) { return rx * (p[1] - a.p0[1]) - ry * (p[0] - a.p0[0]); };
    const double tol = 1e-12 * (1.0 + a.length());
    if (std::abs(cross(b.p0)) > tol || std::abs(cross(b.p1)) > tol) return false;
    const double l2 = rx * rx + ry * ry;
    double t0 = ((b.p0[0] - a.p0[0]) * rx + (b.p0[1] - a.p0[1]) * ry) / l2;
    double t1 = ((b.p1[0] - a.p0[0]) * rx + (b.p1[1] - a.p0[1]) * ry) / l2;
    if (t0 > t1) std::swap(t0, t1);
    return std::min(1.0, t1) - std::max(0.0, t0) > 1e-12;
  }
  if (std::abs(a.center[0] - b.center[0]) > 1e-12 || std::abs(a.center[1] - b.center[1]) > 1e-12 ||
      std::abs(a.radius - b.radius) > 1e-12)
    return false;
  const int n = 64;
  for (int k = 1; k < n; ++k) {
    const double th = b.theta0 + (b.theta1 - b.theta0) * k / n;
    if (a.on_arc_angle(th)) return true;
  }
  return false;
}

}  // namespace detail

/// Least upper bound of |mu_i|: pointwise max of the absolute densities of each part.
inline RadonMeasure lub_measures(const std::vector<RadonMeasure>& list) {
  if (list.empty()) throw Error(ErrorKind::Validation, "lub of an empty family");
  const Domain d = list.front().domain;
  for (const auto& m : list)
    if (!same_domain(m.domain, d)) throw Error(ErrorKind::DomainMismatch, "lub over measures on different domains");
  RadonMeasure out(d);

  std::vector<ScalarField> acs;
  for (const auto& m : list) {
    if (m.ac) acs.push_back(m.ac);
    out.ac_breaks.insert(out.ac_breaks.end(), m.ac_breaks.begin(), m.ac_breaks.end());
    if (m.ac_extra_breaks) {
      if (out.ac_extra_breaks) {
        auto e1 = out.ac_extra_breaks, e2 = m.ac_extra_breaks;
        out.ac_extra_breaks = [e1, e2](double x, double lo, double hi, std::vector<double>& v) {
          e1(x, lo, hi, v);
          e2(x, lo, hi, v);
        };
      } else {
        out.ac_extra_breaks = m.ac_extra_breaks;
      }
    }
  }
  if (!acs.empty()) {
    out.ac = [acs](const Point& p) {
      double v = 0.0;
      for (const auto& f : acs) v = std::max(v, std::abs(f(p)));
      return v;
    };
  }

  // per measure, its merged singular components; components must coincide or be disjoint
  std::vector<std::vector<detail::MergedComponent>> per;
  std::vector<Component> geoms;
  for (const auto& m : list) {
    per.push_back(detail::merge_components(m.jumps));
    for (const auto& mc : per.back()) {
      bool found = false;
      for (const auto& g : geoms) {
        if (g.same_geometry(mc.geom)) found = true;
        else if (detail::partially_overlap(g, mc.geom) || detail::partially_overlap(mc.geom, g))
          throw Error(ErrorKind::UnsupportedStructure, "singular parts overlap without coinciding");
      }
      if (!found) geoms.push_back(mc.geom);
    }
  }
  if (!geoms.empty()) {
    RectifiableSet set;
    set.dim = d.dim();
    set.comps = geoms;
    auto per_ptr = std::make_shared<std::vector<std::vector<detail::MergedComponent>>>(per);
    auto lists = std::make_shared<std::vector<RadonMeasure>>(list);
    // MergedComponent holds pointers into the measures' jump vectors; rebuild them against the owned copies
    for (std::size_t i = 0; i < lists->size(); ++i) (*per_ptr)[i] = detail::merge_components((*lists)[i].jumps);
    out.jumps.push_back(JumpPart{set, [per_ptr, lists, geoms](const SetPoint& sp) {
                                   const Component& g = geoms[std::size_t(sp.component)];
                                   double v = 0.0;
                                   for (const auto& mcs : *per_ptr)
                                     for (const auto& mc : mcs)
                                       if (mc.geom.same_geometry(g))
                                         v = std::max(v, std::abs(detail::merged_density(mc, sp.x)));
                                   return v;
                                 }});
  }

  std::vector<const CantorComponent*> cs;
  for (const auto& m : list)
    for (const auto& k : m.cantor) cs.push_back(&k);
  if (!cs.empty()) {
    const CantorSpec spec = cs.front()->spec;
    std::vector<std::function<double(double)>> dens;
    for (const auto& m : list) {
      std::vector<std::function<double(double)>> local;
      for (const auto& k : m.cantor) {
        if (!(k.spec == spec)) throw Error(ErrorKind::UnsupportedStructure, "Cantor parts use different constructions");
        local.push_back(k.density);
      }
      if (!local.empty())
        dens.push_back([local](double x) {
          double s = 0.0;
          for (const auto& f : local) s += f(x);
          return s;
        });
    }
    out.cantor.push_back(CantorComponent{spec, [dens](double x) {
                                           double v = 0.0;
                                           for (const auto& f : dens) v = std::max(v, std::abs(f(x)));
                                           return v;
                                         }});
  }
  return out;
}

/// Radon-Nikodym derivative of mu with respect to sigma, part by part.
struct RNDensity {
  ScalarField ac;
  std::vector<Component> comps;
  std::function<double(int, const Point&)> jump;
  std::function<double(double)> cantor;

  double at(const Point& x) const { return ac ? ac(x) : 0.0; }
};

inline RNDensity radon_nikodym(const RadonMeasure& mu, const RadonMeasure& sigma, int samples = 33) {
  if (!same_domain(mu.domain, sigma.domain)) throw Error(ErrorKind::DomainMismatch, "measures live on different domains");
  RNDensity out;
  const Box b = mu.domain.box;
  const int dim = mu.domain.dim();
  auto grid = [&](auto&& fn) {
    const int ny = dim == 2 ? samples : 1;
    for (int i = 0; i < samples; ++i)
      for (int j = 0; j < ny; ++j) {
        const double fx = (i + 0.5) / samples, fy = (j + 0.5) / ny;
        fn(Point{b.axis[0].lo + fx * b.axis[0].length(), dim == 2 ? b.axis[1].lo + fy * b.axis[1].length() : 0.0});
      }
  };
  if (mu.ac) {
    grid([&](const Point& p) {
      const double s = sigma.ac ? sigma.ac(p) : 0.0;
      if (s == 0.0 && std::abs(mu.ac(p)) > 1e-14)
        throw Error(ErrorKind::AbsoluteContinuity, "a.c. part of mu charges a sigma-null region");
    });
    auto f = mu.ac, s = sigma.ac;
    out.ac = [f, s](const Point& p) {
      const double d = s ? s(p) : 0.0;
      return d == 0.0 ? 0.0 : f(p) / d;
    };
  }
  auto mm = std::make_shared<RadonMeasure>(mu);
  auto ss = std::make_shared<RadonMeasure>(sigma);
  auto mu_c = std::make_shared<std::vector<detail::MergedComponent>>(detail::merge_components(mm->jumps));
  auto sg_c = std::make_shared<std::vector<detail::MergedComponent>>(detail::merge_components(ss->jumps));
  for (const auto& mc : *mu_c) {
    const auto it = std::find_if(sg_c->begin(), sg_c->end(),
                                 [&](const detail::MergedComponent& o) { return o.geom.same_geometry(mc.geom); });
    if (it == sg_c->end()) throw Error(ErrorKind::AbsoluteContinuity, "jump part of mu lies outside sigma's support");
    const int n = mc.geom.shape == Shape::Point ? 1 : 17;
    for (int k = 0; k < n; ++k) {
      const Point x = mc.geom.at(mc.geom.length() * (k + 0.5) / n);
      if (detail::merged_density(*it, x) == 0.0 && std::abs(detail::merged_density(mc, x)) > 1e-14)
        throw Error(ErrorKind::AbsoluteContinuity, "sigma's surface density vanishes where mu's does not");
    }
  }
  out.comps.clear();
  for (const auto& mc : *sg_c) out.comps.push_back(mc.geom);
  out.jump = [mm, ss, mu_c, sg_c](int comp, const Point& x) {
    const auto& sc = (*sg_c)[std::size_t(comp)];
    const double d = detail::merged_density(sc, x);
    if (d == 0.0) return 0.0;
    for (const auto& mc : *mu_c)
      if (mc.geom.same_geometry(sc.geom)) return detail::merged_density(mc, x) / d;
    return 0.0;
  };
  if (!mu.cantor.empty()) {
    for (const auto& k : mu.cantor) {
      const bool ok = std::any_of(sigma.cantor.begin(), sigma.cantor.end(),
                                  [&](const CantorComponent& o) { return o.spec == k.spec; });
      if (!ok) throw Error(ErrorKind::AbsoluteContinuity, "Cantor part of mu is not carried by sigma");
    }
    auto num = mu.cantor, den = sigma.cantor;
    out.cantor = [num, den](double x) {
      double a = 0.0, b = 0.0;
      for (const auto& k : num) a += k.density(x);
      for (const auto& k : den) b += k.density(x);
      return b == 0.0 ? 0.0 : a / b;
    };
  }
  return out;
}

/// Reassemble rho * sigma from a density and its dominating measure.
inline RadonMeasure times(const RNDensity& rho, const RadonMeasure& sigma) {
  RadonMeasure m(sigma.domain);
  if (sigma.ac && rho.ac) {
    auto s = sigma.ac;
    auto r = rho.ac;
    m.ac = [s, r](const Point& p) { return s(p) * r(p); };
    m.ac_breaks = sigma.ac_breaks;
  }
  auto ss = std::make_shared<RadonMeasure>(sigma);
  auto sg_c = std::make_shared<std::vector<detail::MergedComponent>>(detail::merge_components(ss->jumps));
  if (!sg_c->empty() && rho.jump) {
    RectifiableSet set;
    set.dim = sigma.domain.dim();
    for (const auto& c : *sg_c) set.comps.push_back(c.geom);
    auto rj = rho.jump;
    m.jumps.push_back(JumpPart{set, [ss, sg_c, rj](const SetPoint& sp) {
                                 return detail::merged_density((*sg_c)[std::size_t(sp.component)], sp.x) *
                                        rj(sp.component, sp.x);
                               }});
  }
  if (rho.cantor)
    for (const auto& k : sigma.cantor) {
      auto f = k.density;
      auto r = rho.cantor;
      m.cantor.push_back(CantorComponent{k.spec, [f, r](double x) { return f(x) * r(x); }});
    }
  return m;
}

}  // namespace divchain
