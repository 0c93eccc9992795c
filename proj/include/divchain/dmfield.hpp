#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "divchain/cantor.hpp"
#include "divchain/core.hpp"
#include "divchain/geometry.hpp"
#include "divchain/measures.hpp"
#include "divchain/quadrature.hpp"

namespace divchain {

using ParamVector = std::function<Vec(const Point&, double)>;
using ParamScalar = std::function<double(const Point&, double)>;
using ParamTrace = std::function<Vec(const SetPoint&, double)>;

/// Div^c_x b(., t) = density(x, t) * mu_spec for one fixed self-similar measure.
struct CantorDivergence {
  CantorSpec spec;
  std::function<double(double, double)> density;
};

/// Family t -> b(., t) of bounded divergence-measure fields sharing the
/// singular set N. Traces default to one-sided limits of `eval`.
struct ParamField {
  Domain domain;
  ParamVector eval;
  double sup_bound = 0.0;
  RectifiableSet singular_set;
  ParamTrace trace_plus;
  ParamTrace trace_minus;
  ParamScalar diva;
  std::optional<CantorDivergence> divc;
  ScalarField lipschitz_div;
  std::vector<Component> kinks;
  std::vector<double> t_kinks;
  std::function<double(double)> t_modulus;
  std::string label;

  int dim() const { return domain.dim(); }
  double trace_offset() const { return 1e-10 * domain.scale(); }

  Vec one_sided(const SetPoint& sp, double t, int side, double offset = -1.0) const {
    const double d = side * (offset < 0.0 ? trace_offset() : offset);
    return eval(Point{sp.x[0] + d * sp.normal[0], dim() == 2 ? sp.x[1] + d * sp.normal[1] : 0.0}, t);
  }
  Vec limit(const SetPoint& sp, double t, int side) const {
    const double h = trace_offset();
    return 2.0 * one_sided(sp, t, side, h) - one_sided(sp, t, side, 2.0 * h);
  }
  Vec plus(const SetPoint& sp, double t) const { return trace_plus ? trace_plus(sp, t) : limit(sp, t, +1); }
  Vec minus(const SetPoint& sp, double t) const { return trace_minus ? trace_minus(sp, t) : limit(sp, t, -1); }
  double beta_plus(const SetPoint& sp, double t) const { return dot(plus(sp, t), sp.normal, dim()); }
  double beta_minus(const SetPoint& sp, double t) const { return dot(minus(sp, t), sp.normal, dim()); }

  std::vector<Component> singular_curves() const {
    std::vector<Component> out = singular_set.comps;
    out.insert(out.end(), kinks.begin(), kinks.end());
    return out;
  }

  /// Same family with the normal of N reversed; the traces trade places.
  ParamField flipped() const {
    ParamField f = *this;
    f.singular_set = singular_set.flipped();
    auto unflip = [](const SetPoint& sp) {
      SetPoint q = sp;
      q.normal = {-sp.normal[0], -sp.normal[1]};
      return q;
    };
    if (trace_plus && trace_minus) {
      auto p = trace_plus, m = trace_minus;
      f.trace_plus = [m, unflip](const SetPoint& sp, double t) { return m(unflip(sp), t); };
      f.trace_minus = [p, unflip](const SetPoint& sp, double t) { return p(unflip(sp), t); };
    }
    return f;
  }
};

/// Div_x b(., t) = Div^a dx + (dDiv^c/dsigma) sigma^c + (beta+ - beta-) H^{N-1} on N.
inline RadonMeasure div_decomposition(const ParamField& b, double t) {
  RadonMeasure m(b.domain);
  if (b.diva) {
    auto f = b.diva;
    m.ac = [f, t](const Point& p) { return f(p, t); };
    m.ac_breaks = b.singular_curves();
  }
  m.jump_breaks = curve_crossings(b.singular_curves());
  if (!b.singular_set.empty()) {
    auto bb = std::make_shared<ParamField>(b);
    m.jumps.push_back(JumpPart{b.singular_set, [bb, t](const SetPoint& sp) {
                                 return bb->beta_plus(sp, t) - bb->beta_minus(sp, t);
                               }});
  }
  if (b.divc) {
    auto g = b.divc->density;
    m.cantor.push_back(CantorComponent{b.divc->spec, [g, t](double x) { return g(x, t); }});
  }
  return m;
}

/// B(x,t) = int_0^t b(x,w) dw together with its traces and divergence.
struct PrimitiveField {
  std::shared_ptr<const ParamField> b;
  QuadConfig tcfg{1e-13, 1e-13, 2000, 1};

  const ParamField& field() const { return *b; }

  /// int_a^b f(w) dw split at the declared t-kinks.
  template <class F>
  double t_between(F&& f, double a, double t) const {
    if (t == a) return 0.0;
    std::vector<double> br;
    for (double k : b->t_kinks)
      if ((k - a) * (k - t) < 0.0) br.push_back(k);
    const double lo = std::min(a, t), hi = std::max(a, t);
    const auto r = integrate(f, lo, hi, tcfg, br);
    if (!r.converged)
      throw Error(ErrorKind::Integration, "t-quadrature of the primitive did not converge on [" + std::to_string(lo) +
                                              ", " + std::to_string(hi) + "]");
    return t > a ? r.value : -r.value;
  }
  template <class F>
  double t_integral(F&& f, double t) const {
    return t_between(std::forward<F>(f), 0.0, t);
  }
  Vec t_integral_vec(const std::function<Vec(double)>& f, double t) const {
    Vec out{t_integral([&](double w) { return f(w)[0]; }, t), 0.0};
    if (b->dim() == 2) out[1] = t_integral([&](double w) { return f(w)[1]; }, t);
    return out;
  }

  Vec value(const Point& x, double t) const {
    return t_integral_vec([&](double w) { return b->eval(x, w); }, t);
  }
  Vec plus(const SetPoint& sp, double t) const {
    return t_integral_vec([&](double w) { return b->plus(sp, w); }, t);
  }
  Vec minus(const SetPoint& sp, double t) const {
    return t_integral_vec([&](double w) { return b->minus(sp, w); }, t);
  }
  Vec star(const SetPoint& sp, double t) const { return 0.5 * (plus(sp, t) + minus(sp, t)); }
  double normal_plus(const SetPoint& sp, double t) const {
    return t_integral([&](double w) { return b->beta_plus(sp, w); }, t);
  }
  double normal_minus(const SetPoint& sp, double t) const {
    return t_integral([&](double w) { return b->beta_minus(sp, w); }, t);
  }
  double diva(const Point& x, double t) const {
    if (!b->diva) return 0.0;
    return t_integral([&](double w) { return b->diva(x, w); }, t);
  }
  double divc_density(double x, double t) const {
    if (!b->divc) return 0.0;
    return t_integral([&](double w) { return b->divc->density(x, w); }, t);
  }

  /// Div_x B(., t) assembled from the t-integrated densities.
  RadonMeasure divergence(double t) const {
    RadonMeasure m(b->domain);
    auto self = std::make_shared<PrimitiveField>(*this);
    if (b->diva) {
      m.ac = [self, t](const Point& p) { return self->diva(p, t); };
      m.ac_breaks = b->singular_curves();
    }
    if (!b->singular_set.empty())
      m.jumps.push_back(JumpPart{b->singular_set, [self, t](const SetPoint& sp) {
                                   return self->normal_plus(sp, t) - self->normal_minus(sp, t);
                                 }});
    if (b->divc)
      m.cantor.push_back(CantorComponent{b->divc->spec, [self, t](double x) { return self->divc_density(x, t); }});
    return m;
  }
};

inline PrimitiveField primitive(const ParamField& b) { return PrimitiveField{std::make_shared<ParamField>(b)}; }

/// sigma = lub over the sampled |Div_x b(., t)|, optionally joined with a declared envelope.
inline RadonMeasure sigma_of(const ParamField& b, const std::vector<double>& t_samples,
                             const std::optional<RadonMeasure>& envelope = std::nullopt) {
  if (t_samples.empty()) throw Error(ErrorKind::Validation, "sigma needs at least one t sample");
  std::vector<RadonMeasure> list;
  for (double t : t_samples) list.push_back(div_decomposition(b, t));
  if (envelope) list.push_back(*envelope);
  return lub_measures(list);
}

struct SingularSample {
  Point x{};
  bool declared = false;
  bool detected = false;
  std::array<double, 3> ratio{};
  double exponent = 0.0;
};

struct SingularSetReport {
  bool ok = true;
  std::vector<SingularSample> samples;
  int violations = 0;
};

/// Density ratios sigma(B_r(x)) / r^{N-1} at r = 1e-1, 1e-2, 1e-3. A point is
/// classified singular when the ratio stays positive, i.e. decays slower than
/// r^{1/4} over the last decade.
inline SingularSetReport singular_set_check(const ParamField& b, const RadonMeasure& sigma, int grid = 9,
                                            int per_curve = 5) {
  SingularSetReport rep;
  const int dim = b.dim();
  const std::array<double, 3> radii{1e-1, 1e-2, 1e-3};
  const Box box = b.domain.box;
  QuadConfig cfg;
  cfg.abs_tol = 1e-13;
  auto probe = [&](const Point& x, bool declared) {
    SingularSample s;
    s.x = x;
    s.declared = declared;
    for (int i = 0; i < 3; ++i) {
      const double r = radii[std::size_t(i)];
      s.ratio[std::size_t(i)] = measure_of_ball(sigma, x, r, cfg) / std::pow(r, dim - 1);
    }
    const double r1 = s.ratio[1], r2 = s.ratio[2];
    if (r2 <= 1e-14) {
      s.exponent = INFINITY;
    } else {
      s.exponent = std::log10(std::max(r1, 1e-300) / r2);
    }
    s.detected = r2 > 1e-14 && s.exponent < 0.25;
    if (s.detected != declared) {
      rep.ok = false;
      ++rep.violations;
    }
    rep.samples.push_back(s);
  };
  const auto& N = b.singular_set;
  for (int c = 0; c < int(N.comps.size()); ++c) {
    const auto& comp = N.comps[std::size_t(c)];
    const int n = comp.shape == Shape::Point ? 1 : per_curve;
    for (int k = 0; k < n; ++k) {
      const SetPoint sp = N.sample(c, comp.length() * (k + 0.5) / n);
      if (box.contains(sp.x, -1e-3)) probe(sp.x, true);
    }
  }
  for (const auto& j : sigma.jumps)
    for (int c = 0; c < int(j.set.comps.size()); ++c) {
      const auto& comp = j.set.comps[std::size_t(c)];
      const bool known = std::any_of(N.comps.begin(), N.comps.end(),
                                     [&](const Component& o) { return o.same_geometry(comp); });
      if (known) continue;
      const int n = comp.shape == Shape::Point ? 1 : per_curve;
      for (int k = 0; k < n; ++k) {
        const SetPoint sp = j.set.sample(c, comp.length() * (k + 0.5) / n);
        if (box.contains(sp.x, -1e-3)) probe(sp.x, !N.empty() && N.distance(sp.x) < 1e-9 * b.domain.scale());
      }
    }
  const int ny = dim == 2 ? grid : 1;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < ny; ++j) {
      const Point x{box.axis[0].lo + box.axis[0].length() * (i + 0.5) / grid,
                    dim == 2 ? box.axis[1].lo + box.axis[1].length() * (j + 0.5) / ny : 0.0};
      if (N.empty() || N.distance(x) > 2e-3) probe(x, false);
    }
  return rep;
}

/// <(rho_eps * b(., t))(x), nu(x)> for the even bump rho ~ (1 - |y/eps|^2)^2.
inline double mollified_normal_trace(const ParamField& b, double t, const Point& x, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorKind::Validation, "mollification radius must be positive");
  const auto sp = b.singular_set.locate(x, 1e-9 * b.domain.scale());
  if (!sp) throw Error(ErrorKind::NotOnJumpSet, "mollified trace requested off the singular set");
  const int dim = b.dim();
  Box ball;
  ball.dim = dim;
  for (int i = 0; i < dim; ++i) ball.axis[std::size_t(i)] = Interval{x[std::size_t(i)] - eps, x[std::size_t(i)] + eps};
  if (!b.domain.box.contains(ball, 0.0))
    throw Error(ErrorKind::Boundary, "mollification ball leaves the domain");
  const double norm_c = dim == 1 ? 16.0 / 15.0 * eps : std::numbers::pi / 3.0 * eps * eps;
  auto rho = [&](const Point& y) {
    const double d = dim == 1 ? std::abs(y[0] - x[0]) : std::hypot(y[0] - x[0], y[1] - x[1]);
    if (d >= eps) return 0.0;
    const double s = 1.0 - (d / eps) * (d / eps);
    return s * s / norm_c;
  };
  auto curves = b.singular_curves();
  if (dim == 2) curves.push_back(Component::circle(x, eps));
  QuadConfig cfg;
  cfg.abs_tol = 1e-12;
  cfg.max_intervals = 20000;
  const auto r = integrate_box([&](const Point& y) { return rho(y) * dot(b.eval(y, t), sp->normal, dim); }, ball,
                               curves, cfg);
  return r.value;
}

struct FieldReport {
  bool ok = true;
  std::vector<std::string> issues;
  double max_abs = 0.0;
  double max_trace_mismatch = 0.0;
  double max_modulus_ratio = 0.0;
  double max_vi_defect = 0.0;
  double max_lipschitz_ratio = 0.0;
  double max_beta_step = 0.0;
};

/// Sample-grid validation of |b| <= M, (i), strong traces (vii), the ball-mean
/// limit (vi) off N, t-continuity of beta+- and the Lipschitz bound (iv').
inline FieldReport validate_field(const ParamField& b, const std::vector<double>& t_samples, int grid = 21,
                                  double tol = 1e-8) {
  FieldReport rep;
  auto issue = [&](const std::string& s) {
    if (std::find(rep.issues.begin(), rep.issues.end(), s) == rep.issues.end()) rep.issues.push_back(s);
    rep.ok = false;
  };
  const int dim = b.dim();
  const Box box = b.domain.box;
  if (!b.singular_set.inside(box)) issue("singular set leaves the domain");
  const int ny = dim == 2 ? grid : 1;
  std::vector<Point> pts;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < ny; ++j)
      pts.push_back(Point{box.axis[0].lo + box.axis[0].length() * (i + 0.5) / grid,
                          dim == 2 ? box.axis[1].lo + box.axis[1].length() * (j + 0.5) / ny : 0.0});
  auto mag = [&](const Vec& v) { return dim == 1 ? std::abs(v[0]) : norm(v); };
  const double M = b.sup_bound;
  for (const auto& x : pts)
    for (double t : t_samples) {
      const Vec v = b.eval(x, t);
      rep.max_abs = std::max(rep.max_abs, mag(v));
      if (mag(v) > M * (1 + 1e-12) + 1e-12) issue("|b| exceeds the declared bound M");
      for (double h : {1e-3, 1e-5}) {
        const double d = mag(b.eval(x, t + h) - v);
        if (b.t_modulus) {
          const double w = b.t_modulus(h);
          if (d > w * (1 + 1e-9) + 1e-14) issue("t-continuity modulus violated");
          if (w > 0) rep.max_modulus_ratio = std::max(rep.max_modulus_ratio, d / w);
        }
      }
      if (b.lipschitz_div && b.diva)
        for (double w : t_samples) {
          if (w == t) continue;
          const double lhs = std::abs(b.diva(x, t) - b.diva(x, w));
          const double rhs = b.lipschitz_div(x) * std::abs(t - w);
          if (rhs > 0) rep.max_lipschitz_ratio = std::max(rep.max_lipschitz_ratio, lhs / rhs);
          if (lhs > rhs * (1 + 1e-9) + 1e-12) issue("Lipschitz bound on Div^a_x b violated");
        }
      if (b.singular_set.distance(x) > 2e-2 || b.singular_set.empty()) {
        auto mean = [&](double r) {
          Box bb;
          bb.dim = dim;
          for (int i = 0; i < dim; ++i) bb.axis[std::size_t(i)] = Interval{x[std::size_t(i)] - r, x[std::size_t(i)] + r};
          std::vector<Component> curves = b.singular_curves();
          if (dim == 2) curves.push_back(Component::circle(x, r));
          QuadConfig cfg;
          cfg.abs_tol = 1e-11 * std::pow(r, dim);
          Vec acc{0, 0};
          for (int k = 0; k < dim; ++k) {
            acc[std::size_t(k)] =
                integrate_box([&](const Point& y) {
                  const double dd = dim == 1 ? std::abs(y[0] - x[0]) : std::hypot(y[0] - x[0], y[1] - x[1]);
                  return dd < r ? b.eval(y, t)[std::size_t(k)] : 0.0;
                }, bb, curves, cfg).value;
          }
          const double vol = dim == 1 ? 2 * r : std::numbers::pi * r * r;
          return (1.0 / vol) * acc;
        };
        if (box.contains(x, -1e-2)) {
          const double defect = mag(mean(1e-3) - v);
          rep.max_vi_defect = std::max(rep.max_vi_defect, defect);
          if (defect > 1e-2 * std::max(M, 1.0)) issue("ball means do not approach b off the singular set");
        }
      }
    }
  const auto& N = b.singular_set;
  for (int c = 0; c < int(N.comps.size()); ++c) {
    const auto& comp = N.comps[std::size_t(c)];
    const int n = comp.shape == Shape::Point ? 1 : 7;
    for (int k = 0; k < n; ++k) {
      const SetPoint sp = N.sample(c, comp.length() * (k + 0.5) / n);
      for (double t : t_samples) {
        double mism = INFINITY;
        for (double off : {1e-10, 1e-12}) {
          const double h = off * b.domain.scale();
          mism = std::min(mism, std::max(mag(b.plus(sp, t) - b.one_sided(sp, t, +1, h)),
                                         mag(b.minus(sp, t) - b.one_sided(sp, t, -1, h))));
        }
        rep.max_trace_mismatch = std::max(rep.max_trace_mismatch, mism);
        if (mism > tol) issue("declared trace of b differs from the one-sided limit");
        const double step = std::max(std::abs(b.beta_plus(sp, t + 1e-6) - b.beta_plus(sp, t)),
                                     std::abs(b.beta_minus(sp, t + 1e-6) - b.beta_minus(sp, t)));
        rep.max_beta_step = std::max(rep.max_beta_step, step);
        if (step > 1e-3 * std::max(M, 1.0)) issue("normal traces are not continuous in t");
      }
    }
  }
  return rep;
}

/// Half-ball mean oscillation of B(., w) about B+- at N samples, and full-ball
/// oscillation about B elsewhere, at the radii given.
struct OscillationReport {
  std::vector<double> radii;
  std::vector<double> half_ball;
  std::vector<double> full_ball;
};

inline OscillationReport primitive_oscillation(const PrimitiveField& B, double w, std::vector<double> radii = {1e-2, 1e-3},
                                               int per_curve = 3, int grid = 5) {
  const ParamField& b = B.field();
  const int dim = b.dim();
  OscillationReport rep;
  rep.radii = radii;
  auto mag = [&](const Vec& v) { return dim == 1 ? std::abs(v[0]) : norm(v); };
  auto polar = [&](const Point& x, const Vec& nrm, double r, int side, const Vec& ref) {
    double acc = 0.0, wsum = 0.0;
    const int nr = 4, na = dim == 1 ? 1 : 8;
    for (int i = 0; i < nr; ++i) {
      const double rho = r * (i + 0.5) / nr;
      for (int j = 0; j < na; ++j) {
        Vec d = nrm;
        if (dim == 2) {
          const double th = side == 0 ? 2 * std::numbers::pi * (j + 0.5) / na : std::numbers::pi * ((j + 0.5) / na - 0.5);
          const Vec tg{-nrm[1], nrm[0]};
          d = {std::cos(th) * nrm[0] + std::sin(th) * tg[0], std::cos(th) * nrm[1] + std::sin(th) * tg[1]};
        }
        const double sgn_side = side == 0 ? 1.0 : double(side);
        const Point y{x[0] + sgn_side * rho * d[0], dim == 2 ? x[1] + sgn_side * rho * d[1] : 0.0};
        const double wt = dim == 2 ? rho : 1.0;
        acc += wt * mag(B.value(y, w) - ref);
        wsum += wt;
        if (side == 0 && dim == 1) {
          const Point z{x[0] - rho, 0.0};
          acc += wt * mag(B.value(z, w) - ref);
          wsum += wt;
        }
      }
    }
    return acc / wsum;
  };
  const auto& N = b.singular_set;
  const Box box = b.domain.box;
  for (double r : radii) {
    double hb = 0.0, fb = 0.0;
    for (int c = 0; c < int(N.comps.size()); ++c) {
      const auto& comp = N.comps[std::size_t(c)];
      const int n = comp.shape == Shape::Point ? 1 : per_curve;
      for (int k = 0; k < n; ++k) {
        const SetPoint sp = N.sample(c, comp.length() * (k + 0.5) / n);
        hb = std::max(hb, polar(sp.x, sp.normal, r, +1, B.plus(sp, w)));
        hb = std::max(hb, polar(sp.x, sp.normal, r, -1, B.minus(sp, w)));
      }
    }
    const int ny = dim == 2 ? grid : 1;
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < ny; ++j) {
        const Point x{box.axis[0].lo + box.axis[0].length() * (i + 0.5) / grid,
                      dim == 2 ? box.axis[1].lo + box.axis[1].length() * (j + 0.5) / ny : 0.0};
        if (!N.empty() && N.distance(x) < 2 * r) continue;
        fb = std::max(fb, polar(x, Vec{1, 0}, r, 0, B.value(x, w)));
      }
    rep.half_ball.push_back(hb);
    rep.full_ball.push_back(fb);
  }
  return rep;
}

}  // namespace divchain
