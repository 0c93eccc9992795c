#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "divchain/bv.hpp"
#include "divchain/dmfield.hpp"

namespace divchain {

/// Div v for v(x) = B(x, u(x)) split into the five measures of the chain rule.
struct ChainRuleBreakdown {
  explicit ChainRuleBreakdown(const Domain& d)
      : term_diva(d), term_divc(d), term_ac_u(d), term_cantor_u(d), term_jump(d), total(d), lolo_div_jump(d),
        lolo_star_jump(d) {}

  RadonMeasure term_diva;
  RadonMeasure term_divc;
  RadonMeasure term_ac_u;
  RadonMeasure term_cantor_u;
  RadonMeasure term_jump;
  RadonMeasure total;
  // regrouped jump term: mean of Div_x B at u+- on N, plus <B*(u+) - B*(u-), nu>
  RadonMeasure lolo_div_jump;
  RadonMeasure lolo_star_jump;
  double lolo_gap = 0.0;
  double t_form_gap = NAN;
  std::vector<std::string> notes;

  static constexpr std::array<const char*, 5> term_names{"diva", "divc", "ac_u", "cantor_u", "jump"};

  const RadonMeasure& term(std::size_t i) const {
    switch (i) {
      case 0: return term_diva;
      case 1: return term_divc;
      case 2: return term_ac_u;
      case 3: return term_cantor_u;
      default: return term_jump;
    }
  }
  RadonMeasure diffuse() const { return term_diva + term_divc + term_ac_u + term_cantor_u; }
  RadonMeasure lolo_jump() const { return lolo_div_jump + lolo_star_jump; }
  void finish() { total = term_diva + term_divc + term_ac_u + term_cantor_u + term_jump; }
};

namespace detail {

struct Joint {
  std::vector<int> n_to_j;
  std::vector<int> j_to_n;
};

/// Pairs components of N and J_u carried by the same curve; they must share
/// the normal. Partial overlaps are not representable.
inline Joint joint_structure(const RectifiableSet& N, const RectifiableSet& J) {
  Joint out;
  out.n_to_j.assign(N.comps.size(), -1);
  out.j_to_n.assign(J.comps.size(), -1);
  for (std::size_t i = 0; i < N.comps.size(); ++i)
    for (std::size_t j = 0; j < J.comps.size(); ++j) {
      const auto& a = N.comps[i];
      const auto& b = J.comps[j];
      if (a.same_geometry(b)) {
        if (!a.same_orientation(b))
          throw Error(ErrorKind::Orientation, "N and J_u carry opposite normals on a shared component");
        out.n_to_j[i] = int(j);
        out.j_to_n[j] = int(i);
      } else if (partially_overlap(a, b)) {
        throw Error(ErrorKind::UnsupportedStructure, "N and J_u overlap on part of a component");
      }
    }
  return out;
}

inline InnerBreaks level_breaks(std::shared_ptr<const BVFunction> u, std::vector<double> levels) {
  if (levels.empty()) return {};
  const int dim = u->dim();
  return [u, levels, dim](double x, double lo, double hi, std::vector<double>& out) {
    for (double l : levels) {
      if (dim == 1)
        scan_roots([&](double s) { return u->value(Point{s, 0.0}) - l; }, lo, hi, 512, out);
      else
        scan_roots([&](double s) { return u->value(Point{x, s}) - l; }, lo, hi, 64, out);
    }
  };
}

/// Pieces shared by every chain-rule variant.
struct ChainSetup {
  std::shared_ptr<const ParamField> b;
  std::shared_ptr<const PrimitiveField> B;
  std::shared_ptr<const BVFunction> u;
  std::vector<Component> curves;
  std::vector<Point> crossings;
  Joint joint;
  InnerBreaks levels;
  RectifiableSet j_only;
};

inline ChainSetup chain_setup(const ParamField& b, const BVFunction& u) {
  if (!same_domain(b.domain, u.domain)) throw Error(ErrorKind::DomainMismatch, "field and function live on different domains");
  ChainSetup s;
  s.b = std::make_shared<ParamField>(b);
  s.B = std::make_shared<PrimitiveField>(primitive(b));
  s.u = std::make_shared<BVFunction>(u);
  s.curves = b.singular_curves();
  const auto uc = u.singular_curves();
  s.curves.insert(s.curves.end(), uc.begin(), uc.end());
  s.crossings = curve_crossings(s.curves);
  s.joint = joint_structure(b.singular_set, u.jump_set);
  s.levels = level_breaks(s.u, b.t_kinks);
  s.j_only.dim = u.dim();
  for (std::size_t j = 0; j < u.jump_set.comps.size(); ++j)
    if (s.joint.j_to_n[j] < 0) s.j_only.comps.push_back(u.jump_set.comps[j]);
  return s;
}

/// Density on N given (sp, u+, u-); on N \ J_u both traces are u~.
using NDensity = std::function<double(const SetPoint&, double, double, bool)>;
/// Density on J_u \ N given (sp, u+, u-).
using JDensity = std::function<double(const SetPoint&, double, double)>;

inline RadonMeasure jump_measure(const ChainSetup& s, const NDensity& fn, const JDensity& fj) {
  RadonMeasure m(s.b->domain);
  m.jump_breaks = s.crossings;
  auto u = s.u;
  if (!s.b->singular_set.empty() && fn) {
    auto match = s.joint.n_to_j;
    m.jumps.push_back(JumpPart{s.b->singular_set, [u, match, fn](const SetPoint& sp) {
                                 if (match[std::size_t(sp.component)] >= 0) return fn(sp, u->plus(sp), u->minus(sp), true);
                                 const double ut = u->value(sp.x);
                                 return fn(sp, ut, ut, false);
                               }});
  }
  if (!s.j_only.empty() && fj)
    m.jumps.push_back(JumpPart{s.j_only, [u, fj](const SetPoint& sp) { return fj(sp, u->plus(sp), u->minus(sp)); }});
  return m;
}

/// Diffuse terms: Div^a-type density g_a(x, u~), Cantor-in-x density g_c(x, u~)
/// and the weight w(x, u~) paired with grad u and D^c u.
inline void diffuse_terms(ChainRuleBreakdown& r, const ChainSetup& s, std::function<double(const Point&, double)> ga,
                          std::function<double(double, double)> gc, std::function<Vec(const Point&, double)> w) {
  auto u = s.u;
  const int dim = u->dim();
  if (ga) {
    r.term_diva.ac = [u, ga](const Point& p) { return ga(p, u->value(p)); };
    r.term_diva.ac_breaks = s.curves;
    r.term_diva.ac_extra_breaks = s.levels;
  }
  if (gc && s.b->divc)
    r.term_divc.cantor.push_back(
        CantorComponent{s.b->divc->spec, [u, gc](double x) { return gc(x, u->value(Point{x, 0.0})); }});
  r.term_ac_u.ac = [u, w, dim](const Point& p) { return dot(w(p, u->value(p)), u->grad(p), dim); };
  r.term_ac_u.ac_breaks = s.curves;
  r.term_ac_u.ac_extra_breaks = s.levels;
  if (u->cantor) {
    auto c = u->cantor->density;
    r.term_cantor_u.cantor.push_back(CantorComponent{
        u->cantor->spec, [u, w, c](double x) { return c(x) * w(Point{x, 0.0}, u->value(Point{x, 0.0}))[0]; }});
  }
}

inline void degenerate_notes(ChainRuleBreakdown& r, const ChainSetup& s) {
  const auto& J = s.u->jump_set;
  for (int c = 0; c < int(J.comps.size()); ++c) {
    const auto& comp = J.comps[std::size_t(c)];
    const int n = comp.shape == Shape::Point ? 1 : 9;
    for (int k = 0; k < n; ++k) {
      const SetPoint sp = J.sample(c, comp.length() * (k + 0.5) / n);
      if (s.u->plus(sp) == s.u->minus(sp)) {
        r.notes.push_back("u+ = u- at a sample of jump component " + std::to_string(c) + "; it contributes nothing");
        break;
      }
    }
  }
  if (s.b->t_kinks.empty() || !s.b->diva) return;
  const Box box = s.b->domain.box;
  const int dim = s.b->dim(), g = dim == 1 ? 400 : 60;
  for (double tk : s.b->t_kinks) {
    int hits = 0, total = 0;
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < (dim == 2 ? g : 1); ++j) {
        const Point p{box.axis[0].lo + box.axis[0].length() * (i + 0.5) / g,
                      dim == 2 ? box.axis[1].lo + box.axis[1].length() * (j + 0.5) / g : 0.0};
        ++total;
        if (std::abs(s.u->value(p) - tk) <= 1e-12) ++hits;
      }
    if (hits > total / 1000)
      r.notes.push_back("warning: u has a plateau at the level t = " + std::to_string(tk) +
                        " where Div^a_x b jumps in t");
  }
}

inline double max_gap_on(const RectifiableSet& set, const SurfaceDensity& f, const SurfaceDensity& g) {
  double gap = 0.0;
  for (int c = 0; c < int(set.comps.size()); ++c) {
    const auto& comp = set.comps[std::size_t(c)];
    const int n = comp.shape == Shape::Point ? 1 : 5;
    for (int k = 0; k < n; ++k) {
      const SetPoint sp = set.sample(c, comp.length() * (k + 0.5) / n);
      gap = std::max(gap, std::abs(f(sp) - g(sp)));
    }
  }
  return gap;
}

}  // namespace detail

/// Chain rule for a divergence-measure family: jump density <B+(x,u+) - B-(x,u-), nu> on N u J_u.
inline ChainRuleBreakdown chain_dm(const ParamField& b, const BVFunction& u) {
  const auto s = detail::chain_setup(b, u);
  const auto B = s.B;
  const auto bb = s.b;
  const int dim = b.dim();
  ChainRuleBreakdown r(b.domain);
  detail::diffuse_terms(
      r, s, b.diva ? std::function<double(const Point&, double)>([B](const Point& p, double t) { return B->diva(p, t); })
                   : nullptr,
      [B](double x, double t) { return B->divc_density(x, t); },
      [bb](const Point& p, double t) { return bb->eval(p, t); });

  auto direct_n = [B](const SetPoint& sp, double up, double um, bool) {
    return B->normal_plus(sp, up) - B->normal_minus(sp, um);
  };
  auto across_j = [B, bb, dim](const SetPoint& sp, double up, double um) {
    return B->t_between([&](double w) { return dot(bb->eval(sp.x, w), sp.normal, dim); }, um, up);
  };
  r.term_jump = detail::jump_measure(s, direct_n, across_j);

  auto lolo_div = [B](const SetPoint& sp, double up, double um, bool) {
    return 0.5 * ((B->normal_plus(sp, up) - B->normal_minus(sp, up)) + (B->normal_plus(sp, um) - B->normal_minus(sp, um)));
  };
  auto lolo_star = [B](const SetPoint& sp, double up, double um, bool) {
    return 0.5 * ((B->normal_plus(sp, up) + B->normal_minus(sp, up)) - (B->normal_plus(sp, um) + B->normal_minus(sp, um)));
  };
  r.lolo_div_jump = detail::jump_measure(s, lolo_div, nullptr);
  r.lolo_star_jump = detail::jump_measure(s, lolo_star, across_j);
  if (!b.singular_set.empty()) {
    const auto& tj = r.term_jump.jumps.front().density;
    const auto& dj = r.lolo_div_jump.jumps.front().density;
    const auto& sj = r.lolo_star_jump.jumps.front().density;
    r.lolo_gap = detail::max_gap_on(b.singular_set, tj, [&](const SetPoint& sp) { return dj(sp) + sj(sp); });
    if (r.lolo_gap > 1e-10 * std::max(1.0, b.sup_bound * u.sup_bound))
      r.notes.push_back("error: direct and regrouped jump densities disagree by " + std::to_string(r.lolo_gap));
  }
  detail::degenerate_notes(r, s);
  r.finish();
  return r;
}

struct TFormValue {
  double value = 0.0;
  bool converged = true;
};

/// int dt sgn(t) int chi*_{Omega_{u,t}} phi dDiv_x b(., t), by t-quadrature of
/// spatial integrals over the level regions.
inline TFormValue t_integral_form(const ParamField& b, const BVFunction& u, const TestFunction& phi,
                                  double tol = 1e-9) {
  const auto s = detail::chain_setup(b, u);
  const int dim = b.dim();
  const Box sb = phi.support_box();
  QuadConfig inner;
  inner.abs_tol = 0.1 * tol / (2.0 * std::max(u.sup_bound, 1e-3));
  inner.max_intervals = 2000;
  std::vector<Component> curves = s.curves;
  const auto pb = phi.breaks();
  curves.insert(curves.end(), pb.begin(), pb.end());
  TFormValue out;
  auto at_level = [&](double t) {
    if (t == 0.0) return 0.0;
    const double sg = t > 0 ? 1.0 : -1.0;
    auto chi = [t](double v) { return LevelRegion::chi(v, t); };
    double acc = 0.0;
    if (b.diva) {
      InnerBreaks lvl = [&](double x, double lo, double hi, std::vector<double>& o) {
        if (dim == 1)
          scan_roots([&](double y) { return u.value(Point{y, 0.0}) - t; }, lo, hi, 256, o);
        else
          scan_roots([&](double y) { return u.value(Point{x, y}) - t; }, lo, hi, 48, o);
      };
      auto r = integrate_box([&](const Point& p) { return chi(u.value(p)) * phi.value(p) * b.diva(p, t); }, sb, curves,
                             inner, lvl);
      acc += r.value;
      out.converged = out.converged && r.converged;
    }
    const auto& N = b.singular_set;
    for (int c = 0; c < int(N.comps.size()); ++c) {
      const bool matched = s.joint.n_to_j[std::size_t(c)] >= 0;
      auto dens = [&](const SetPoint& sp) {
        const double w = matched ? 0.5 * (chi(u.plus(sp)) + chi(u.minus(sp))) : chi(u.value(sp.x));
        if (w == 0.0) return 0.0;
        return w * phi.value(sp.x) * (b.beta_plus(sp, t) - b.beta_minus(sp, t));
      };
      const auto& comp = N.comps[std::size_t(c)];
      if (comp.shape == Shape::Point) {
        acc += dens(N.sample(c, 0.0));
        continue;
      }
      auto params = detail::params_on(comp, s.crossings, detail::box_crossings(comp, sb));
      if (!matched)
        scan_roots([&](double q) { return u.value(comp.at(q)) - t; }, 0.0, comp.length(), 128, params);
      auto r = integrate_component(dens, N, c, inner, params);
      acc += r.value;
      out.converged = out.converged && r.converged;
    }
    if (b.divc) {
      auto r = cantor_integrate(
          b.divc->spec,
          [&](double x) { return chi(u.value(Point{x, 0.0})) * phi.value(Point{x, 0.0}) * b.divc->density(x, t); },
          sb.axis[0].lo, sb.axis[0].hi);
      acc += r.value;
    }
    return sg * acc;
  };
  QuadConfig outer;
  outer.abs_tol = 0.5 * tol;
  outer.max_intervals = 400;
  const double M = u.sup_bound;
  std::vector<double> br{0.0};
  for (double k : b.t_kinks)
    if (std::abs(k) < M) br.push_back(k);
  if (dim == 1) {
    // the level integrals have kinks at traces, at the support ends and at critical values of u
    const double lo = sb.axis[0].lo, hi = sb.axis[0].hi;
    for (int c = 0; c < int(u.jump_set.comps.size()); ++c) {
      const SetPoint sp = u.jump_set.sample(c, 0.0);
      if (sp.x[0] <= lo || sp.x[0] >= hi) continue;
      br.push_back(u.plus(sp));
      br.push_back(u.minus(sp));
    }
    br.push_back(u.value(Point{lo, 0.0}));
    br.push_back(u.value(Point{hi, 0.0}));
    std::vector<double> crit;
    scan_roots([&](double y) { return u.grad(Point{y, 0.0})[0]; }, lo, hi, 512, crit);
    for (double y : crit) br.push_back(u.value(Point{y, 0.0}));
    std::erase_if(br, [M](double v) { return !(std::abs(v) < M); });
  }
  auto r = integrate(at_level, -M, M, outer, br);
  out.value = r.value;
  out.converged = out.converged && r.converged;
  return out;
}

namespace detail {

inline std::vector<TestFunction> probe_functions(const ParamField& b) {
  std::vector<TestFunction> out;
  const Box box = b.domain.box;
  const int dim = b.dim();
  const double cx = 0.5 * (box.axis[0].lo + box.axis[0].hi), hx = 0.5 * box.axis[0].length();
  if (dim == 1) {
    out.push_back(TestFunction::plateau_1d(cx, 0.3 * hx, 0.9 * hx));
  } else {
    const double cy = 0.5 * (box.axis[1].lo + box.axis[1].hi), hy = 0.5 * box.axis[1].length();
    out.push_back(TestFunction::tensor_2d({cx, cy}, {0.3 * hx, 0.3 * hy}, {0.9 * hx, 0.9 * hy}));
  }
  const auto& N = b.singular_set;
  for (int c = 0; c < int(N.comps.size()) && out.size() < 4; ++c) {
    const SetPoint sp = N.sample(c, 0.37 * N.comps[std::size_t(c)].length());
    double room = INFINITY;
    for (int i = 0; i < dim; ++i)
      room = std::min({room, sp.x[std::size_t(i)] - box.axis[std::size_t(i)].lo, box.axis[std::size_t(i)].hi - sp.x[std::size_t(i)]});
    if (room <= 1e-3 * b.domain.scale()) continue;
    out.push_back(dim == 1 ? TestFunction::plateau_1d(sp.x[0], 0.2 * room, 0.9 * room).oscillating(3.0 / room)
                           : TestFunction::radial_2d(sp.x, 0.2 * room, 0.9 * room).oscillating(2.0 / room, {1, 1}));
  }
  return out;
}

}  // namespace detail

/// Chain rule for W^{1,1} u: the x-terms are cross-checked against the t-integral form.
inline ChainRuleBreakdown chain_w11(const ParamField& b, const BVFunction& u, double tol = 1e-7) {
  if (!u.jump_set.empty() || u.cantor)
    throw Error(ErrorKind::WrongRegularity, "chain_w11 needs u without jumps or Cantor part");
  auto r = chain_dm(b, u);
  const RadonMeasure x_terms = r.term_diva + r.term_divc + r.term_jump;
  double gap = 0.0;
  for (const auto& phi : detail::probe_functions(b)) {
    const auto tf = t_integral_form(b, u, phi, 0.1 * tol);
    const double lhs = measure_apply(x_terms, phi);
    gap = std::max(gap, std::abs(tf.value - lhs));
    if (!tf.converged) r.notes.push_back("t-integral form did not converge for one probe");
  }
  r.t_form_gap = gap;
  if (gap > tol) r.notes.push_back("error: t-integral form differs from the x-terms by " + std::to_string(gap));
  return r;
}

/// Scalar-b chain rule in one dimension, with the trace-interval integral of b* on J_u.
inline ChainRuleBreakdown chain_bv_scalar(const ParamField& b, const BVFunction& u) {
  if (b.dim() != 1) throw Error(ErrorKind::UnsupportedStructure, "the scalar-b chain rule is one-dimensional");
  const auto s = detail::chain_setup(b, u);
  const auto B = s.B;
  const auto bb = s.b;
  ChainRuleBreakdown r(b.domain);
  detail::diffuse_terms(
      r, s, b.diva ? std::function<double(const Point&, double)>([B](const Point& p, double t) { return B->diva(p, t); })
                   : nullptr,
      [B](double x, double t) { return B->divc_density(x, t); },
      [bb](const Point& p, double t) { return bb->eval(p, t); });
  auto on_n = [B, bb](const SetPoint& sp, double up, double um, bool matched) {
    auto jump = [&](double w) { return bb->beta_plus(sp, w) - bb->beta_minus(sp, w); };
    if (!matched) return B->t_integral(jump, up);
    const double level = 0.5 * (B->t_integral(jump, up) + B->t_integral(jump, um));
    const double interval =
        B->t_between([&](double w) { return 0.5 * (bb->beta_plus(sp, w) + bb->beta_minus(sp, w)); }, um, up);
    return level + interval;
  };
  auto on_j = [B, bb](const SetPoint& sp, double up, double um) {
    return B->t_between([&](double w) { return bb->eval(sp.x, w)[0] * sp.normal[0]; }, um, up);
  };
  r.term_jump = detail::jump_measure(s, on_n, on_j);
  detail::degenerate_notes(r, s);
  r.finish();
  return r;
}

/// Div(A h(u)) for a t-independent field A and h in C^1 with bounded derivative.
inline ChainRuleBreakdown product_rule(const ParamField& A, const std::function<double(double)>& h,
                                       const std::function<double(double)>& hprime, const BVFunction& u) {
  const auto s = detail::chain_setup(A, u);
  const auto aa = s.b;
  const int dim = A.dim();
  ChainRuleBreakdown r(A.domain);
  detail::diffuse_terms(
      r, s,
      A.diva ? std::function<double(const Point&, double)>([aa, h](const Point& p, double t) { return aa->diva(p, 0.0) * h(t); })
             : nullptr,
      [aa, h](double x, double t) { return aa->divc->density(x, 0.0) * h(t); },
      [aa, hprime](const Point& p, double t) { return hprime(t) * aa->eval(p, 0.0); });
  auto on_n = [aa, h](const SetPoint& sp, double up, double um, bool) {
    return h(up) * aa->beta_plus(sp, 0.0) - h(um) * aa->beta_minus(sp, 0.0);
  };
  auto on_j = [aa, h, dim](const SetPoint& sp, double up, double um) {
    return (h(up) - h(um)) * dot(aa->eval(sp.x, 0.0), sp.normal, dim);
  };
  r.term_jump = detail::jump_measure(s, on_n, on_j);
  r.finish();
  return r;
}

struct PairingResult {
  RadonMeasure pairing;
  double max_off_support = 0.0;
};

/// (A, Du) = Div(uA) - u* Div A, checked to vanish where |Du| does.
inline PairingResult anzellotti_pairing(const ParamField& A, const BVFunction& u) {
  const auto prod = product_rule(A, [](double t) { return t; }, [](double) { return 1.0; }, u);
  const auto s = detail::chain_setup(A, u);
  const auto aa = s.b;
  const auto uu = s.u;
  RadonMeasure ustar(A.domain);
  if (A.diva) {
    ustar.ac = [aa, uu](const Point& p) { return uu->value(p) * aa->diva(p, 0.0); };
    ustar.ac_breaks = s.curves;
  }
  if (A.divc)
    ustar.cantor.push_back(CantorComponent{
        A.divc->spec, [aa, uu](double x) { return uu->value(Point{x, 0.0}) * aa->divc->density(x, 0.0); }});
  ustar = ustar + detail::jump_measure(
                      s,
                      [aa](const SetPoint& sp, double up, double um, bool) {
                        return 0.5 * (up + um) * (aa->beta_plus(sp, 0.0) - aa->beta_minus(sp, 0.0));
                      },
                      nullptr);
  PairingResult out{prod.total - ustar, 0.0};
  const auto& m = out.pairing;
  // |Du| vanishes on N \ J_u, on the Cantor part of Div A (unless u shares it) and where grad u = 0
  auto merged = detail::merge_components(m.jumps);
  for (std::size_t c = 0; c < A.singular_set.comps.size(); ++c) {
    if (s.joint.n_to_j[c] >= 0) continue;
    const auto& comp = A.singular_set.comps[c];
    for (const auto& mc : merged) {
      if (!mc.geom.same_geometry(comp)) continue;
      const int n = comp.shape == Shape::Point ? 1 : 7;
      for (int k = 0; k < n; ++k)
        out.max_off_support =
            std::max(out.max_off_support, std::abs(detail::merged_density(mc, comp.at(comp.length() * (k + 0.5) / n))));
    }
  }
  if (A.divc && !(u.cantor && u.cantor->spec == A.divc->spec)) {
    std::vector<double> pts;
    cantor_cells(A.divc->spec, 5, pts);
    for (double x : pts) {
      double d = 0.0;
      for (const auto& k : m.cantor)
        if (k.spec == A.divc->spec) d += k.density(x);
      out.max_off_support = std::max(out.max_off_support, std::abs(d));
    }
  }
  if (m.ac) {
    const Box box = A.domain.box;
    const int dim = A.dim(), g = dim == 1 ? 201 : 31;
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < (dim == 2 ? g : 1); ++j) {
        const Point p{box.axis[0].lo + box.axis[0].length() * (i + 0.5) / g,
                      dim == 2 ? box.axis[1].lo + box.axis[1].length() * (j + 0.5) / g : 0.0};
        if (norm(u.grad(p)) == 0.0) out.max_off_support = std::max(out.max_off_support, std::abs(m.ac(p)));
      }
  }
  return out;
}

/// Autonomous chain rule: Div B(u) = <b(u~), grad u> + <b(u~), D^c u> + <B(u+) - B(u-), nu> on J_u.
inline ChainRuleBreakdown volpert(const ParamField& b, const BVFunction& u) {
  if (!b.singular_set.empty() || b.divc)
    throw Error(ErrorKind::Validation, "the autonomous chain rule needs b independent of x");
  ParamField bx = b;
  bx.diva = nullptr;
  const auto s = detail::chain_setup(bx, u);
  const auto B = s.B;
  const auto bb = s.b;
  const int dim = b.dim();
  ChainRuleBreakdown r(b.domain);
  detail::diffuse_terms(r, s, nullptr, nullptr, [bb](const Point& p, double t) { return bb->eval(p, t); });
  r.term_jump = detail::jump_measure(s, nullptr, [B, dim](const SetPoint& sp, double up, double um) {
    return dot(B->value(sp.x, up) - B->value(sp.x, um), sp.normal, dim);
  });
  r.finish();
  return r;
}

/// Open box or disc compactly inside the domain.
struct GreenRegion {
  bool disc = false;
  Box box;
  Point center{};
  double radius = 0.0;

  static GreenRegion of_box(const Box& b) { return GreenRegion{false, b, {}, 0.0}; }
  static GreenRegion of_disc(Point c, double r) {
    GreenRegion g;
    g.disc = true;
    g.box = Box{2, {Interval{c[0] - r, c[0] + r}, Interval{c[1] - r, c[1] + r}}};
    g.center = c;
    g.radius = r;
    return g;
  }
};

struct GreenResult {
  double lhs = 0.0;
  double rhs = 0.0;
  std::array<double, 3> eps{};
  std::array<double, 3> raw{};
  double tol = 0.0;
  bool pass = false;
};

/// Div A(Omega) through smoothed indicators at three widths (Richardson in eps^2)
/// against the boundary flux of A.
inline GreenResult green_check(const ParamField& A, const GreenRegion& omega, double tol_abs = 1e-7,
                               double tol_rel = 1e-6) {
  const int dim = A.dim();
  const Box& dom = A.domain.box;
  const Box& ob = omega.box;
  const double scale = A.domain.scale();
  for (int i = 0; i < dim; ++i)
    if (!(ob.axis[std::size_t(i)].lo > dom.axis[std::size_t(i)].lo && ob.axis[std::size_t(i)].hi < dom.axis[std::size_t(i)].hi))
      throw Error(ErrorKind::Geometry, "region must lie strictly inside the domain");
  std::vector<Component> bnd;
  if (dim == 2) {
    if (omega.disc) {
      bnd.push_back(Component::circle(omega.center, omega.radius));
    } else {
      const double x0 = ob.axis[0].lo, x1 = ob.axis[0].hi, y0 = ob.axis[1].lo, y1 = ob.axis[1].hi;
      // counterclockwise edges, so the default normal points outward
      bnd.push_back(Component::segment({x0, y0}, {x1, y0}));
      bnd.push_back(Component::segment({x1, y0}, {x1, y1}));
      bnd.push_back(Component::segment({x1, y1}, {x0, y1}));
      bnd.push_back(Component::segment({x0, y1}, {x0, y0}));
    }
  }
  const auto& N = A.singular_set;
  for (const auto& c : N.comps) {
    if (dim == 1) {
      if (std::abs(c.p0[0] - ob.axis[0].lo) < 1e-9 * scale || std::abs(c.p0[0] - ob.axis[0].hi) < 1e-9 * scale)
        throw Error(ErrorKind::Geometry, "region boundary meets N");
      continue;
    }
    // two consecutive samples on the same edge mean N follows that edge
    for (const auto& e : bnd) {
      bool last = false;
      for (int k = 0; k <= 64; ++k) {
        const bool on = e.distance(c.at(c.length() * k / 64.0), 2) < 1e-9 * scale;
        if (on && last) throw Error(ErrorKind::Geometry, "N runs along the region boundary");
        last = on;
      }
    }
    for (const auto& e : bnd)
      for (const auto& p : intersections(c, e)) {
        const double sc = c.param_of(p), se = e.param_of(p);
        const Vec nc = c.normal_at(sc), ne = e.normal_at(se);
        const double cross = std::abs(nc[0] * ne[1] - nc[1] * ne[0]);
        if (cross < 1e-6) throw Error(ErrorKind::Geometry, "N meets the region boundary tangentially");
      }
  }
  GreenResult out;
  const RadonMeasure div = div_decomposition(A, 0.0);
  const double e0 = 1e-2 * (dim == 1 ? ob.axis[0].length() : std::min(ob.axis[0].length(), ob.axis[1].length()));
  QuadConfig cfg;
  cfg.abs_tol = 1e-12;
  cfg.max_intervals = 20000;
  for (int k = 0; k < 3; ++k) {
    const double e = e0 / double(1 << k);
    out.eps[std::size_t(k)] = e;
    TestFunction phi;
    if (dim == 1) {
      const double c = 0.5 * (ob.axis[0].lo + ob.axis[0].hi), h = 0.5 * ob.axis[0].length();
      phi = TestFunction::plateau_1d(c, h - e, h + e);
    } else if (omega.disc) {
      phi = TestFunction::radial_2d(omega.center, omega.radius - e, omega.radius + e);
    } else {
      const Point c{0.5 * (ob.axis[0].lo + ob.axis[0].hi), 0.5 * (ob.axis[1].lo + ob.axis[1].hi)};
      const std::array<double, 2> h{0.5 * ob.axis[0].length(), 0.5 * ob.axis[1].length()};
      phi = TestFunction::tensor_2d(c, {h[0] - e, h[1] - e}, {h[0] + e, h[1] + e});
    }
    out.raw[std::size_t(k)] = measure_apply(div, phi, cfg);
  }
  const double r1 = (4 * out.raw[1] - out.raw[0]) / 3, r2 = (4 * out.raw[2] - out.raw[1]) / 3;
  out.lhs = (16 * r2 - r1) / 15;
  if (dim == 1) {
    out.rhs = A.eval({ob.axis[0].hi, 0.0}, 0.0)[0] - A.eval({ob.axis[0].lo, 0.0}, 0.0)[0];
  } else {
    RectifiableSet bs;
    bs.dim = 2;
    bs.comps = bnd;
    std::vector<Point> cuts;
    for (const auto& c : A.singular_curves())
      for (const auto& e : bnd)
        for (const auto& p : intersections(c, e)) cuts.push_back(p);
    for (int i = 0; i < int(bnd.size()); ++i)
      out.rhs += integrate_component([&](const SetPoint& sp) { return dot(A.eval(sp.x, 0.0), sp.normal, 2); }, bs, i,
                                     cfg, detail::params_on(bnd[std::size_t(i)], cuts))
                     .value;
  }
  out.tol = std::max(tol_abs, tol_rel * std::abs(out.rhs));
  out.pass = std::abs(out.lhs - out.rhs) <= out.tol;
  return out;
}

struct StimabRow {
  Box box;
  double lhs = 0.0;
  double rhs_literal = 0.0;
  double rhs_scaled = 0.0;
  bool ok_literal = false;
  bool ok_scaled = false;
};

/// |Div v|(box) against |sigma|(box) + M |Du|(box), and the variant with sigma scaled by sup|u|.
inline std::vector<StimabRow> stimab_check(const ChainRuleBreakdown& r, const RadonMeasure& sigma, double M,
                                           const BVFunction& u, const std::vector<Box>& boxes) {
  const RadonMeasure du = variation_measure(u);
  std::vector<StimabRow> out;
  for (const auto& b : boxes) {
    StimabRow row;
    row.box = b;
    row.lhs = total_variation(r.total, b);
    const double ts = total_variation(sigma, b), tu = total_variation(du, b);
    row.rhs_literal = ts + M * tu;
    row.rhs_scaled = std::max(1.0, u.sup_bound) * ts + M * tu;
    row.ok_literal = row.lhs <= row.rhs_literal + 1e-9;
    row.ok_scaled = row.lhs <= row.rhs_scaled + 1e-9;
    out.push_back(row);
  }
  return out;
}

}  // namespace divchain
