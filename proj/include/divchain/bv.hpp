#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "divchain/core.hpp"
#include "divchain/expr.hpp"
#include "divchain/geometry.hpp"
#include "divchain/measures.hpp"

namespace divchain {

using VectorField = std::function<Vec(const Point&)>;

/// Scalar piecewise-C^1 function of bounded variation with a declared jump set.
///
/// `value` is any representative that is continuous off the jump set; traces
/// are the declared functions when present, otherwise one-sided limits taken at
/// distance `trace_offset()` along the normal. The optional Cantor summand is
/// stored through its derivative, a density against a self-similar measure.
struct BVFunction {
  Domain domain;
  ScalarField value;
  VectorField grad;
  RectifiableSet jump_set;
  SurfaceDensity trace_plus;
  SurfaceDensity trace_minus;
  std::optional<CantorComponent> cantor;
  std::vector<Component> kinks;
  double sup_bound = 0.0;
  std::string label;

  int dim() const { return domain.dim(); }
  double trace_offset() const { return 1e-10 * domain.scale(); }

  double one_sided(const SetPoint& sp, int side, double offset = -1.0) const {
    const double d = side * (offset < 0.0 ? trace_offset() : offset);
    return value(Point{sp.x[0] + d * sp.normal[0], dim() == 2 ? sp.x[1] + d * sp.normal[1] : 0.0});
  }
  /// One-sided limit from the values at offsets h and 2h (second order in h).
  double limit(const SetPoint& sp, int side) const {
    const double h = trace_offset();
    return 2.0 * one_sided(sp, side, h) - one_sided(sp, side, 2.0 * h);
  }
  double plus(const SetPoint& sp) const { return trace_plus ? trace_plus(sp) : limit(sp, +1); }
  double minus(const SetPoint& sp) const { return trace_minus ? trace_minus(sp) : limit(sp, -1); }

  /// All curves along which u or its gradient may be discontinuous.
  std::vector<Component> singular_curves() const {
    std::vector<Component> out = jump_set.comps;
    out.insert(out.end(), kinks.begin(), kinks.end());
    return out;
  }

  /// Same function with the jump-set normal reversed (traces swap roles).
  BVFunction flipped() const {
    BVFunction u = *this;
    u.jump_set = jump_set.flipped();
    auto unflip = [](const SetPoint& sp) {
      SetPoint q = sp;
      q.normal = {-sp.normal[0], -sp.normal[1]};
      return q;
    };
    if (trace_plus && trace_minus) {
      auto p = trace_plus, m = trace_minus;
      u.trace_plus = [m, unflip](const SetPoint& sp) { return m(unflip(sp)); };
      u.trace_minus = [p, unflip](const SetPoint& sp) { return p(unflip(sp)); };
    }
    return u;
  }
};

/// (u^+, u^-) at a point of J_u.
inline std::pair<double, double> traces_at(const BVFunction& u, const Point& x, double tol = -1.0) {
  if (tol < 0.0) tol = 1e-9 * u.domain.scale();
  if (u.jump_set.empty()) throw Error(ErrorKind::NotOnJumpSet, "the function has an empty jump set");
  const auto sp = u.jump_set.locate(x, tol);
  if (!sp) throw Error(ErrorKind::NotOnJumpSet, "point is not on the jump set");
  return {u.plus(*sp), u.minus(*sp)};
}

/// Precise representative: the value off J_u, the trace mean on J_u.
inline double precise_rep(const BVFunction& u, const Point& x, double tol = -1.0) {
  if (tol < 0.0) tol = 1e-12 * u.domain.scale();
  if (!u.jump_set.empty())
    if (const auto sp = u.jump_set.locate(x, tol)) return 0.5 * (u.plus(*sp) + u.minus(*sp));
  return u.value(x);
}

/// Du split per axis into gradient, Cantor and jump parts.
inline std::vector<RadonMeasure> derivative(const BVFunction& u) {
  std::vector<RadonMeasure> out;
  for (int i = 0; i < u.dim(); ++i) {
    RadonMeasure m(u.domain);
    auto g = u.grad;
    m.ac = [g, i](const Point& p) { return g(p)[std::size_t(i)]; };
    m.ac_breaks = u.singular_curves();
    m.jump_breaks = curve_crossings(m.ac_breaks);
    if (!u.jump_set.empty()) {
      auto uu = std::make_shared<BVFunction>(u);
      m.jumps.push_back(JumpPart{u.jump_set, [uu, i](const SetPoint& sp) {
                                   return (uu->plus(sp) - uu->minus(sp)) * sp.normal[std::size_t(i)];
                                 }});
    }
    if (u.cantor && i == 0) m.cantor.push_back(*u.cantor);
    out.push_back(std::move(m));
  }
  return out;
}

/// |Du| as a nonnegative measure.
inline RadonMeasure variation_measure(const BVFunction& u) {
  RadonMeasure m(u.domain);
  auto g = u.grad;
  const int dim = u.dim();
  m.ac = [g, dim](const Point& p) {
    const Vec v = g(p);
    return dim == 1 ? std::abs(v[0]) : norm(v);
  };
  m.ac_breaks = u.singular_curves();
  m.jump_breaks = curve_crossings(m.ac_breaks);
  if (!u.jump_set.empty()) {
    auto uu = std::make_shared<BVFunction>(u);
    m.jumps.push_back(
        JumpPart{u.jump_set, [uu](const SetPoint& sp) { return std::abs(uu->plus(sp) - uu->minus(sp)); }});
  }
  if (u.cantor) {
    auto c = *u.cantor;
    auto f = c.density;
    c.density = [f](double x) { return std::abs(f(x)); };
    m.cantor.push_back(c);
  }
  return m;
}

/// Omega_{u,t} = {x : t lies in the segment between 0 and u(x)}, t != 0.
struct LevelRegion {
  const BVFunction* u = nullptr;
  double t = 0.0;

  static double chi(double value, double t) {
    if (t > 0.0) return value > t ? 1.0 : (value == t ? 0.5 : 0.0);
    return value < t ? 1.0 : (value == t ? 0.5 : 0.0);
  }
  double indicator(const Point& x) const { return chi(u->value(x), t); }
  /// Precise representative: the indicator off J_u, the mean of the trace indicators on J_u.
  double precise(const Point& x) const {
    if (!u->jump_set.empty())
      if (const auto sp = u->jump_set.locate(x, 1e-12 * u->domain.scale()))
        return 0.5 * (chi(u->plus(*sp), t) + chi(u->minus(*sp), t));
    return indicator(x);
  }
  double precise_on_jump(const SetPoint& sp) const { return 0.5 * (chi(u->plus(sp), t) + chi(u->minus(sp), t)); }
};

inline LevelRegion level_region(const BVFunction& u, double t) {
  if (t == 0.0) throw Error(ErrorKind::DegenerateLevel, "level t = 0 is not defined");
  return LevelRegion{&u, t};
}

/// Validation findings for a BV function.
struct BVReport {
  bool ok = true;
  std::vector<std::string> issues;
  double max_trace_mismatch = 0.0;
  double max_abs = 0.0;
  double max_half_ball_oscillation = 0.0;
};

/// Checks traces against one-sided limits, nondegeneracy of jumps, the sup
/// bound and the half-ball mean oscillation at r in {1e-2, 1e-3}.
inline BVReport validate_bv(const BVFunction& u, int samples_per_curve = 9, double tol = 1e-8) {
  BVReport rep;
  auto issue = [&](const std::string& s) {
    rep.ok = false;
    rep.issues.push_back(s);
  };
  const Box box = u.domain.box;
  if (!u.jump_set.inside(box)) issue("jump set leaves the domain");
  const int dim = u.dim();
  for (int c = 0; c < int(u.jump_set.comps.size()); ++c) {
    const auto& comp = u.jump_set.comps[std::size_t(c)];
    const int n = comp.shape == Shape::Point ? 1 : samples_per_curve;
    for (int k = 0; k < n; ++k) {
      const double s = comp.length() * (k + 0.5) / n;
      const SetPoint sp = u.jump_set.sample(c, s);
      const double up = u.plus(sp), um = u.minus(sp);
      double mism = INFINITY;
      for (double off : {1e-10, 1e-12, 1e-14}) {
        const double h = off * u.domain.scale();
        mism = std::min(mism, std::max(std::abs(up - u.one_sided(sp, +1, h)), std::abs(um - u.one_sided(sp, -1, h))));
      }
      rep.max_trace_mismatch = std::max(rep.max_trace_mismatch, mism);
      if (mism > tol) issue("declared trace differs from the one-sided limit on component " + std::to_string(c));
      if (std::abs(up - um) <= tol) issue("u+ = u- at a jump-set sample of component " + std::to_string(c));
      // half-ball mean oscillation, r = 1e-2 and 1e-3, on a small polar grid
      for (double r : {1e-2, 1e-3}) {
        double osc_p = 0.0, osc_m = 0.0, wsum = 0.0;
        const int nr = 6, na = dim == 1 ? 1 : 12;
        for (int i = 0; i < nr; ++i) {
          const double rho = r * (i + 0.5) / nr;
          for (int j = 0; j < na; ++j) {
            Vec dvec;
            if (dim == 1) {
              dvec = sp.normal;
            } else {
              const double th = std::numbers::pi * ((j + 0.5) / na - 0.5);
              const Vec t{-sp.normal[1], sp.normal[0]};
              dvec = {std::cos(th) * sp.normal[0] + std::sin(th) * t[0], std::cos(th) * sp.normal[1] + std::sin(th) * t[1]};
            }
            const Point xp{sp.x[0] + rho * dvec[0], dim == 2 ? sp.x[1] + rho * dvec[1] : 0.0};
            const Point xm{sp.x[0] - rho * dvec[0], dim == 2 ? sp.x[1] - rho * dvec[1] : 0.0};
            if (!box.contains(xp) || !box.contains(xm)) continue;
            const double w = dim == 2 ? rho : 1.0;
            osc_p += w * std::abs(u.value(xp) - up);
            osc_m += w * std::abs(u.value(xm) - um);
            wsum += w;
          }
        }
        if (wsum > 0) rep.max_half_ball_oscillation = std::max({rep.max_half_ball_oscillation, osc_p / wsum, osc_m / wsum});
      }
    }
  }
  const int g = dim == 1 ? 401 : 61;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < (dim == 2 ? g : 1); ++j) {
      const Point p{box.axis[0].lo + box.axis[0].length() * (i + 0.5) / g,
                    dim == 2 ? box.axis[1].lo + box.axis[1].length() * (j + 0.5) / g : 0.0};
      rep.max_abs = std::max(rep.max_abs, std::abs(u.value(p)));
    }
  if (rep.max_abs > u.sup_bound * (1 + 1e-12) + 1e-12) issue("|u| exceeds the declared sup bound");
  return rep;
}

/// BV function from expressions in x (and y). `cantor_coeff` and `cantor_spec`
/// declare D^c u = coeff * mu_spec for a Cantor summand of the expression.
inline BVFunction make_bv(const Domain& d, const Expr& u, RectifiableSet jumps, double sup_bound,
                          std::optional<Expr> up = std::nullopt, std::optional<Expr> um = std::nullopt,
                          std::optional<std::pair<CantorSpec, double>> cantor = std::nullopt,
                          std::vector<Component> kinks = {}) {
  BVFunction f;
  f.domain = d;
  f.value = [u](const Point& p) { return u.at(p); };
  const Expr ux = u.diff(Var::X), uy = u.diff(Var::Y);
  f.grad = [ux, uy](const Point& p) { return Vec{ux.at(p), uy.at(p)}; };
  jumps.dim = d.dim();
  f.jump_set = std::move(jumps);
  if (up && um) {
    const Expr a = *up, b = *um;
    f.trace_plus = [a](const SetPoint& sp) { return a.at(sp.x); };
    f.trace_minus = [b](const SetPoint& sp) { return b.at(sp.x); };
  }
  if (cantor) {
    const double c = cantor->second;
    f.cantor = CantorComponent{cantor->first, [c](double) { return c; }};
  }
  f.kinks = std::move(kinks);
  f.sup_bound = sup_bound;
  return f;
}

}  // namespace divchain
