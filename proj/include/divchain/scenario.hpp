#pragma once

// Declarative scenario files (YAML): domain, field family, BV function, flux
// and the experiments to run on them. Loading parses and validates only.

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "divchain/chainrule.hpp"
#include "divchain/conslaw.hpp"

namespace divchain {

struct Tolerances {
  double abs = 1e-7;
  double rel = 1e-6;
  double quad = 1e-10;
};

struct FieldDecl {
  std::vector<Expr> b;
  /// Closed form of B(x, t) = int_0^t b(x, w) dw, used by the oracle when present.
  std::vector<Expr> primitive;
  std::vector<Expr> trace_plus, trace_minus;
  std::optional<Expr> cantor_divergence;
  double sup = 0.0;
  RectifiableSet singular;
  std::vector<Component> kinks;
  std::vector<double> t_kinks;

  bool depends_on(Var v) const {
    for (const auto& e : b)
      if (e.depends_on(v)) return true;
    return false;
  }
};

struct FunctionDecl {
  Expr u;
  std::string source;
  double sup = 1.0;
  RectifiableSet jumps;
  std::optional<Expr> trace_plus, trace_minus;
  std::optional<double> cantor;
  std::vector<Component> kinks;
};

struct FluxDecl {
  Expr A;
  std::string source;
  FunctionDecl k;
  double lo = 0.0, hi = 1.0;
  double bound = 1.0;
};

struct EntropyDecl {
  enum Kind { Quadratic, Identity, Kruzkov } kind = Quadratic;
  double c = 0.0, delta = 1e-3;

  EntropyPair make() const {
    switch (kind) {
      case Identity: return EntropyPair::identity();
      case Kruzkov: return EntropyPair::kruzkov(c, delta);
      default: return EntropyPair::quadratic();
    }
  }
};

struct ChainOpts {
  /// Compare the wrong measure (total plus Lebesgue) as a negative control.
  bool wrong_measure = false;
};

struct ProductOpts {
  Expr h;
  std::string source;
};

struct GreenOpts {
  std::vector<GreenRegion> regions;
  double t = 0.5;
  double abs = 1e-9;
  double rel = 1e-6;
};

struct StimabOpts {
  int grid = 4;
  int t_samples = 41;
};

struct MollificationOpts {
  std::vector<double> eps{0.1, 0.05, 0.025};
  std::vector<double> t{0.5};
};

struct ShockMassDecl {
  double expected = 0.0;
  double rel = 0.02;
  int cells = 0;
};

struct ConslawOpts {
  std::optional<FunctionDecl> initial;
  /// Imposed trajectory u(x, t) instead of a solver run; `initial` then holds u(., 0).
  std::optional<Expr> imposed;
  int imposed_steps = 80;
  double T = 0.5;
  std::vector<int> cells{200, 400};
  double cfl = 0.45;
  std::vector<EntropyDecl> entropies{EntropyDecl{}};
  double residual_tol = 1e-10;
  std::optional<ShockMassDecl> shock_mass;
  bool kinetic_identity = false;
};

struct KatoOpts {
  std::vector<std::pair<FunctionDecl, FunctionDecl>> pairs;
  double T = 0.5;
  std::vector<int> cells{400, 800};
  int reference_cells = 6400;
  double cfl = 0.45;
  double ratio_lo = 1.4, ratio_hi = 2.6;
  double slope = 1.0;
  double w_tol = 1e-8;
};

struct Experiment {
  std::string kind;
  ChainOpts chain;
  ProductOpts product;
  GreenOpts green;
  StimabOpts stimab;
  MollificationOpts mollification;
  ConslawOpts conslaw;
  KatoOpts kato;
};

struct Scenario {
  std::string id;
  std::string description;
  std::string source;
  Domain domain;
  std::optional<FieldDecl> field;
  std::optional<FunctionDecl> function;
  std::optional<FluxDecl> flux;
  int min_functions = 20;
  Tolerances tol;
  std::vector<Experiment> experiments;
  std::string output_dir;

  bool uses_cantor() const {
    return (field && field->cantor_divergence) || (function && function->cantor);
  }
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"chain",  "w11",     "bv-scalar", "product", "anzellotti",    "volpert",
                                          "stimab", "green",   "mollification", "conslaw", "kato"};
  return k;
}

namespace detail {

inline thread_local int dims_ = 1;

inline std::string where(const YAML::Node& n) {
  const auto m = n.Mark();
  if (m.is_null()) return "";
  return "line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ": ";
}

[[noreturn]] inline void parse_fail(const YAML::Node& n, const std::string& msg) {
  throw Error(ErrorKind::Parse, where(n) + msg);
}
[[noreturn]] inline void invalid(const YAML::Node& n, const std::string& msg) {
  throw Error(ErrorKind::Validation, where(n) + msg);
}

inline void allow_keys(const YAML::Node& n, std::initializer_list<const char*> keys) {
  if (!n.IsMap()) parse_fail(n, "expected a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (const char* k : keys) ok = ok || key == k;
    if (!ok) parse_fail(kv.first, "unknown key '" + key + "'");
  }
}

inline const YAML::Node require(const YAML::Node& n, const char* key) {
  const YAML::Node c = n[key];
  if (!c) parse_fail(n, std::string("missing key '") + key + "'");
  return c;
}

inline double to_double(const YAML::Node& n) {
  if (!n.IsScalar()) parse_fail(n, "expected a number");
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    parse_fail(n, "expected a number, got '" + n.Scalar() + "'");
  }
}

inline int to_int(const YAML::Node& n) {
  if (!n.IsScalar()) parse_fail(n, "expected an integer");
  try {
    return n.as<int>();
  } catch (const YAML::Exception&) {
    parse_fail(n, "expected an integer, got '" + n.Scalar() + "'");
  }
}

inline bool to_bool(const YAML::Node& n) {
  try {
    return n.as<bool>();
  } catch (const YAML::Exception&) {
    parse_fail(n, "expected true or false");
  }
}

inline std::string to_string(const YAML::Node& n) {
  if (!n.IsScalar()) parse_fail(n, "expected a string");
  return n.Scalar();
}

inline std::vector<double> to_doubles(const YAML::Node& n) {
  std::vector<double> out;
  if (n.IsScalar()) return {to_double(n)};
  if (!n.IsSequence()) parse_fail(n, "expected a list of numbers");
  for (const auto& c : n) out.push_back(to_double(c));
  return out;
}

inline std::vector<int> to_ints(const YAML::Node& n) {
  std::vector<int> out;
  if (n.IsScalar()) return {to_int(n)};
  if (!n.IsSequence()) parse_fail(n, "expected a list of integers");
  for (const auto& c : n) out.push_back(to_int(c));
  return out;
}

/// Parses an expression and restricts it to the given variables.
inline Expr to_expr(const YAML::Node& n, std::initializer_list<Var> allowed, const char* what) {
  const std::string src = n.IsScalar() ? n.Scalar() : "";
  if (!n.IsScalar() || src.empty()) parse_fail(n, std::string("expected an expression for ") + what);
  Expr e;
  try {
    e = Expr::parse(src);
  } catch (const Error& err) {
    parse_fail(n, "in expression '" + src + "': " + err.what());
  }
  static const std::pair<Var, const char*> names[] = {{Var::X, "x"}, {Var::Y, "y"}, {Var::T, "t"},
                                                      {Var::K, "k"}, {Var::U, "u"}, {Var::V, "v"}};
  for (const auto& [v, name] : names) {
    if (v == Var::Y && e.depends_on(v) && dims_ == 1) invalid(n, std::string(what) + " uses y in a one-dimensional domain");
    bool ok = false;
    for (Var a : allowed) ok = ok || a == v;
    if (!ok && e.depends_on(v))
      invalid(n, std::string(what) + " may not use the variable '" + name + "': '" + src + "'");
  }
  return e;
}

inline Point to_point(const YAML::Node& n) {
  const auto v = to_doubles(n);
  if (v.size() != 2) parse_fail(n, "expected a point [x, y]");
  return {v[0], v[1]};
}

inline Component to_component(const YAML::Node& n, int dim) {
  if (!n.IsMap()) parse_fail(n, "expected a component such as {point: 0.3}");
  allow_keys(n, {"point", "normal", "segment", "circle", "arc", "orientation"});
  int orient = 1;
  if (n["normal"]) orient = to_int(n["normal"]);
  if (n["orientation"]) orient = to_int(n["orientation"]);
  if (orient != 1 && orient != -1) invalid(n, "orientation must be 1 or -1");
  try {
    if (n["point"]) {
      if (dim != 1) invalid(n, "point components belong to one-dimensional domains");
      return Component::point(to_double(n["point"]), orient);
    }
    if (dim != 2) invalid(n, "curve components belong to two-dimensional domains");
    if (n["segment"]) {
      const auto s = n["segment"];
      if (!s.IsSequence() || s.size() != 2) parse_fail(s, "a segment is [[x0, y0], [x1, y1]]");
      return Component::segment(to_point(s[0]), to_point(s[1]), orient);
    }
    if (n["circle"]) {
      const auto v = to_doubles(n["circle"]);
      if (v.size() != 3) parse_fail(n["circle"], "a circle is [cx, cy, r]");
      return Component::circle({v[0], v[1]}, v[2], orient);
    }
    if (n["arc"]) {
      const auto v = to_doubles(n["arc"]);
      if (v.size() != 5) parse_fail(n["arc"], "an arc is [cx, cy, r, theta0, theta1]");
      return Component::arc({v[0], v[1]}, v[2], v[3], v[4], orient);
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Geometry) throw Error(ErrorKind::Geometry, where(n) + e.what());
    throw;
  }
  parse_fail(n, "a component needs one of point, segment, circle or arc");
}

inline std::vector<Component> to_components(const YAML::Node& n, int dim) {
  std::vector<Component> out;
  if (!n) return out;
  if (!n.IsSequence()) parse_fail(n, "expected a list of components");
  for (const auto& c : n) out.push_back(to_component(c, dim));
  return out;
}

inline RectifiableSet to_set(const YAML::Node& n, int dim) {
  RectifiableSet s;
  s.dim = dim;
  s.comps = to_components(n, dim);
  return s;
}

inline void check_inside(const YAML::Node& n, const RectifiableSet& s, const Domain& d, const char* what) {
  if (!s.inside(d.box)) throw Error(ErrorKind::Geometry, where(n) + what + " leaves the domain");
}

inline void check_inside(const YAML::Node& n, const std::vector<Component>& cs, const Domain& d, const char* what) {
  RectifiableSet s;
  s.dim = d.dim();
  s.comps = cs;
  check_inside(n, s, d, what);
}

inline Domain to_domain(const YAML::Node& n) {
  const auto v = to_doubles(n);
  if (v.size() == 2) {
    if (!(v[1] > v[0])) invalid(n, "empty domain");
    return Domain::interval(v[0], v[1]);
  }
  if (v.size() == 4) {
    if (!(v[1] > v[0]) || !(v[3] > v[2])) invalid(n, "empty domain");
    return Domain::rect(v[0], v[1], v[2], v[3]);
  }
  parse_fail(n, "domain is [a, b] or [x0, x1, y0, y1]");
}

inline void check_cantor(const YAML::Node& n, const Domain& d) {
  if (d.dim() != 1) throw Error(ErrorKind::Validation, where(n) + "Cantor parts exist only in one dimension");
  if (!d.box.axis[0].contains(0.0) || !d.box.axis[0].contains(1.0))
    invalid(n, "the Cantor set [0, 1] must lie inside the domain");
}

inline std::vector<Expr> to_vector_expr(const YAML::Node& n, int dim, std::initializer_list<Var> allowed, const char* what) {
  std::vector<Expr> out;
  if (n.IsScalar() && dim == 1) return {to_expr(n, allowed, what)};
  if (!n.IsSequence()) parse_fail(n, std::string(what) + " is a list with one expression per component");
  for (const auto& c : n) out.push_back(to_expr(c, allowed, what));
  if (int(out.size()) != dim)
    invalid(n, std::string(what) + " has " + std::to_string(out.size()) + " components in dimension " + std::to_string(dim));
  return out;
}

inline FieldDecl to_field(const YAML::Node& n, const Domain& d) {
  allow_keys(n, {"b", "primitive", "sup", "singular", "trace_plus", "trace_minus", "cantor_divergence", "kinks", "t_kinks"});
  const int dim = d.dim();
  FieldDecl f;
  const std::initializer_list<Var> xyt{Var::X, Var::Y, Var::T};
  f.b = to_vector_expr(require(n, "b"), dim, xyt, "field b");
  if (n["primitive"]) f.primitive = to_vector_expr(n["primitive"], dim, xyt, "primitive");
  f.sup = to_double(require(n, "sup"));
  if (!(f.sup > 0.0)) invalid(n["sup"], "sup must be positive");
  f.singular = to_set(n["singular"], dim);
  check_inside(n["singular"], f.singular, d, "singular set");
  if (n["trace_plus"] || n["trace_minus"]) {
    if (!n["trace_plus"] || !n["trace_minus"]) invalid(n, "declare both trace_plus and trace_minus or neither");
    f.trace_plus = to_vector_expr(n["trace_plus"], dim, xyt, "trace_plus");
    f.trace_minus = to_vector_expr(n["trace_minus"], dim, xyt, "trace_minus");
  }
  bool cantor = false;
  for (const auto& e : f.b) cantor = cantor || e.uses_cantor();
  if (n["cantor_divergence"]) {
    check_cantor(n["cantor_divergence"], d);
    f.cantor_divergence = to_expr(n["cantor_divergence"], {Var::X, Var::T}, "cantor_divergence");
  } else if (cantor) {
    invalid(n, "field uses Cantor(x); declare its cantor_divergence density");
  }
  if (cantor) check_cantor(n, d);
  f.kinks = to_components(n["kinks"], dim);
  check_inside(n["kinks"], f.kinks, d, "kink set");
  if (n["t_kinks"]) f.t_kinks = to_doubles(n["t_kinks"]);
  return f;
}

inline FunctionDecl to_function(const YAML::Node& n, const Domain& d, const char* what) {
  const int dim = d.dim();
  FunctionDecl f;
  const std::initializer_list<Var> xy{Var::X, Var::Y};
  if (n.IsScalar()) {
    f.u = to_expr(n, xy, what);
    f.source = n.Scalar();
    if (f.u.uses_cantor()) invalid(n, std::string(what) + " uses Cantor(x); declare its cantor coefficient");
    return f;
  }
  allow_keys(n, {"u", "sup", "jumps", "trace_plus", "trace_minus", "cantor", "kinks"});
  const auto un = require(n, "u");
  f.u = to_expr(un, xy, what);
  f.source = un.Scalar();
  if (n["sup"]) {
    f.sup = to_double(n["sup"]);
    if (!(f.sup > 0.0)) invalid(n["sup"], "sup must be positive");
  }
  f.jumps = to_set(n["jumps"], dim);
  check_inside(n["jumps"], f.jumps, d, "jump set");
  if (n["trace_plus"] || n["trace_minus"]) {
    if (!n["trace_plus"] || !n["trace_minus"]) invalid(n, "declare both trace_plus and trace_minus or neither");
    f.trace_plus = to_expr(n["trace_plus"], xy, "trace_plus");
    f.trace_minus = to_expr(n["trace_minus"], xy, "trace_minus");
  }
  if (n["cantor"]) {
    check_cantor(n["cantor"], d);
    f.cantor = to_double(n["cantor"]);
    if (!f.u.uses_cantor()) invalid(n["cantor"], "cantor coefficient declared but u does not use Cantor(x)");
  } else if (f.u.uses_cantor()) {
    invalid(n, std::string(what) + " uses Cantor(x); declare its cantor coefficient");
  }
  f.kinks = to_components(n["kinks"], dim);
  check_inside(n["kinks"], f.kinks, d, "kink set");
  return f;
}

inline FluxDecl to_flux(const YAML::Node& n, const Domain& d) {
  allow_keys(n, {"A", "k", "range", "bound"});
  if (d.dim() != 1) throw Error(ErrorKind::Validation, where(n) + "conservation laws are one-dimensional");
  FluxDecl f;
  const auto an = require(n, "A");
  f.A = to_expr(an, {Var::K, Var::U}, "flux A");
  f.source = an.Scalar();
  f.k = to_function(require(n, "k"), d, "flux coefficient k");
  const auto r = to_doubles(require(n, "range"));
  if (r.size() != 2 || !(r[1] > r[0])) invalid(n["range"], "range is [lo, hi] with lo < hi");
  f.lo = r[0];
  f.hi = r[1];
  f.bound = n["bound"] ? to_double(n["bound"]) : std::max(std::abs(f.lo), std::abs(f.hi));
  return f;
}

inline EntropyDecl to_entropy(const YAML::Node& n) {
  EntropyDecl e;
  if (n.IsScalar()) {
    const auto s = n.Scalar();
    if (s == "quadratic") return e;
    if (s == "identity") {
      e.kind = EntropyDecl::Identity;
      return e;
    }
    parse_fail(n, "entropy is quadratic, identity or {kruzkov: [c, delta]}");
  }
  allow_keys(n, {"kruzkov"});
  const auto v = to_doubles(require(n, "kruzkov"));
  if (v.size() != 2 || !(v[1] > 0.0)) invalid(n, "kruzkov needs [c, delta] with delta > 0");
  e.kind = EntropyDecl::Kruzkov;
  e.c = v[0];
  e.delta = v[1];
  return e;
}

inline void check_cells(const YAML::Node& n, const std::vector<int>& cells) {
  if (cells.empty()) invalid(n, "cells must not be empty");
  for (int c : cells)
    if (c < 2) invalid(n, "cell counts must be at least 2");
}

inline Experiment to_experiment(const std::string& kind, const YAML::Node& key, const YAML::Node& n, const Scenario& s) {
  Experiment ex;
  ex.kind = kind;
  const bool empty = !n || n.IsNull();
  auto opts = [&](std::initializer_list<const char*> keys) {
    if (!empty) allow_keys(n, keys);
  };
  auto need_chain_data = [&] {
    if (!s.field || !s.function) invalid(key, "experiment '" + kind + "' needs a field and a function section");
  };
  if (kind == "chain" || kind == "bv-scalar") {
    opts({"control"});
    need_chain_data();
    if (!empty && n["control"]) {
      if (to_string(n["control"]) != "wrong-measure") parse_fail(n["control"], "the only control is wrong-measure");
      ex.chain.wrong_measure = true;
    }
    if (kind == "bv-scalar" && s.domain.dim() != 1) invalid(key, "bv-scalar runs in one dimension");
  } else if (kind == "w11") {
    opts({});
    need_chain_data();
    if (!s.function->jumps.empty() || s.function->cantor) invalid(key, "w11 needs u without jumps or Cantor part");
  } else if (kind == "volpert") {
    opts({});
    need_chain_data();
    if (s.field->depends_on(Var::X) || s.field->depends_on(Var::Y) || !s.field->singular.empty())
      invalid(key, "volpert needs b independent of x");
  } else if (kind == "anzellotti" || kind == "product") {
    opts({"h"});
    need_chain_data();
    if (s.field->depends_on(Var::T)) invalid(key, kind + " needs b independent of t");
    if (kind == "product") {
      const auto h = require(n, "h");
      ex.product.h = to_expr(h, {Var::T}, "h");
      ex.product.source = h.Scalar();
    } else if (!empty && n["h"]) {
      parse_fail(n["h"], "anzellotti uses h(t) = t");
    }
  } else if (kind == "stimab") {
    opts({"grid", "t_samples"});
    need_chain_data();
    if (!empty && n["grid"]) ex.stimab.grid = to_int(n["grid"]);
    if (!empty && n["t_samples"]) ex.stimab.t_samples = to_int(n["t_samples"]);
    if (ex.stimab.grid < 1 || ex.stimab.t_samples < 2) invalid(n, "grid >= 1 and t_samples >= 2 required");
  } else if (kind == "green") {
    opts({"regions", "t", "abs", "rel"});
    if (!s.field) invalid(key, "green needs a field section");
    if (!empty && n["t"]) ex.green.t = to_double(n["t"]);
    if (!empty && n["abs"]) ex.green.abs = to_double(n["abs"]);
    if (!empty && n["rel"]) ex.green.rel = to_double(n["rel"]);
    const auto regs = require(n, "regions");
    if (!regs.IsSequence() || regs.size() == 0) parse_fail(regs, "regions is a nonempty list");
    const Box& dom = s.domain.box;
    for (const auto& r : regs) {
      allow_keys(r, {"box", "disc"});
      GreenRegion g;
      if (r["box"]) {
        const auto v = to_doubles(r["box"]);
        if (int(v.size()) != 2 * s.domain.dim()) parse_fail(r["box"], "box has two numbers per dimension");
        Box b = dom;
        for (int i = 0; i < s.domain.dim(); ++i) b.axis[std::size_t(i)] = Interval{v[2 * std::size_t(i)], v[2 * std::size_t(i) + 1]};
        g = GreenRegion::of_box(b);
      } else if (r["disc"]) {
        if (s.domain.dim() != 2) invalid(r, "discs need a two-dimensional domain");
        const auto v = to_doubles(r["disc"]);
        if (v.size() != 3 || !(v[2] > 0.0)) parse_fail(r["disc"], "disc is [cx, cy, r] with r > 0");
        g = GreenRegion::of_disc({v[0], v[1]}, v[2]);
      } else {
        parse_fail(r, "a region is {box: [...]} or {disc: [cx, cy, r]}");
      }
      for (int i = 0; i < s.domain.dim(); ++i) {
        const auto& a = g.box.axis[std::size_t(i)];
        const auto& D = dom.axis[std::size_t(i)];
        if (!(a.hi > a.lo) || !(a.lo > D.lo && a.hi < D.hi))
          throw Error(ErrorKind::Geometry, where(r) + "region must lie strictly inside the domain");
      }
      ex.green.regions.push_back(g);
    }
  } else if (kind == "mollification") {
    opts({"eps", "t"});
    if (!s.field || s.field->singular.empty()) invalid(key, "mollification needs a field with a singular set");
    if (!empty && n["eps"]) ex.mollification.eps = to_doubles(n["eps"]);
    if (!empty && n["t"]) ex.mollification.t = to_doubles(n["t"]);
    const auto& e = ex.mollification.eps;
    for (std::size_t i = 0; i < e.size(); ++i)
      if (!(e[i] > 0.0) || (i > 0 && !(e[i] < e[i - 1]))) invalid(n["eps"], "eps must be positive and decreasing");
    if (e.size() < 2) invalid(key, "mollification needs at least two radii");
  } else if (kind == "conslaw") {
    opts({"initial", "imposed", "steps", "T", "cells", "cfl", "entropies", "residual_tol", "shock_mass",
          "kinetic_identity"});
    if (!s.flux) invalid(key, "conslaw needs a flux section");
    auto& c = ex.conslaw;
    if (empty) parse_fail(key, "conslaw needs initial data");
    if (n["imposed"]) {
      c.imposed = to_expr(n["imposed"], {Var::X, Var::T}, "imposed trajectory");
      if (n["steps"]) c.imposed_steps = to_int(n["steps"]);
      if (c.imposed_steps < 1) invalid(n["steps"], "steps must be positive");
    }
    c.initial = to_function(require(n, "initial"), s.domain, "initial data");
    if (n["T"]) c.T = to_double(n["T"]);
    if (!(c.T > 0.0)) invalid(n["T"], "T must be positive");
    if (n["cells"]) c.cells = to_ints(n["cells"]);
    check_cells(n["cells"], c.cells);
    if (n["cfl"]) c.cfl = to_double(n["cfl"]);
    if (!(c.cfl > 0.0 && c.cfl < 1.0)) invalid(n["cfl"], "cfl must lie in (0, 1)");
    if (n["entropies"]) {
      c.entropies.clear();
      if (!n["entropies"].IsSequence()) parse_fail(n["entropies"], "entropies is a list");
      for (const auto& e : n["entropies"]) c.entropies.push_back(to_entropy(e));
    }
    if (n["residual_tol"]) c.residual_tol = to_double(n["residual_tol"]);
    if (n["shock_mass"]) {
      const auto sm = n["shock_mass"];
      allow_keys(sm, {"expected", "rel", "cells"});
      ShockMassDecl d;
      d.expected = to_double(require(sm, "expected"));
      if (sm["rel"]) d.rel = to_double(sm["rel"]);
      d.cells = sm["cells"] ? to_int(sm["cells"]) : c.cells.back();
      if (std::find(c.cells.begin(), c.cells.end(), d.cells) == c.cells.end())
        invalid(sm, "shock_mass cells must be one of the run resolutions");
      c.shock_mass = d;
    }
    if (n["kinetic_identity"]) c.kinetic_identity = to_bool(n["kinetic_identity"]);
    if (c.kinetic_identity && c.cells.size() < 2) invalid(n, "kinetic_identity needs two resolutions");
  } else if (kind == "kato") {
    opts({"pairs", "T", "cells", "reference_cells", "cfl", "ratio", "slope", "w_tol"});
    if (!s.flux) invalid(key, "kato needs a flux section");
    if (empty) parse_fail(key, "kato needs data pairs");
    auto& k = ex.kato;
    const auto pairs = require(n, "pairs");
    if (!pairs.IsSequence() || pairs.size() == 0) parse_fail(pairs, "pairs is a nonempty list");
    for (const auto& p : pairs) {
      allow_keys(p, {"a", "b"});
      k.pairs.emplace_back(to_function(require(p, "a"), s.domain, "data a"), to_function(require(p, "b"), s.domain, "data b"));
    }
    if (n["T"]) k.T = to_double(n["T"]);
    if (!(k.T > 0.0)) invalid(n["T"], "T must be positive");
    if (n["cells"]) k.cells = to_ints(n["cells"]);
    check_cells(n["cells"], k.cells);
    for (std::size_t i = 1; i < k.cells.size(); ++i)
      if (k.cells[i] != 2 * k.cells[i - 1]) invalid(n["cells"], "kato resolutions must double");
    if (n["reference_cells"]) k.reference_cells = to_int(n["reference_cells"]);
    if (k.reference_cells <= k.cells.back()) invalid(n, "reference_cells must exceed the finest resolution");
    if (n["cfl"]) k.cfl = to_double(n["cfl"]);
    if (!(k.cfl > 0.0 && k.cfl < 1.0)) invalid(n["cfl"], "cfl must lie in (0, 1)");
    if (n["ratio"]) {
      const auto r = to_doubles(n["ratio"]);
      if (r.size() != 2 || !(r[1] > r[0])) invalid(n["ratio"], "ratio is [lo, hi]");
      k.ratio_lo = r[0];
      k.ratio_hi = r[1];
    }
    if (n["slope"]) k.slope = to_double(n["slope"]);
    if (n["w_tol"]) k.w_tol = to_double(n["w_tol"]);
  } else {
    parse_fail(key, "unknown experiment '" + kind + "'");
  }
  return ex;
}

}  // namespace detail

/// Parses and validates a scenario document; `source` names it in messages.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "<string>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw Error(ErrorKind::Parse, source + ": line " + std::to_string(e.mark.line + 1) + ", column " +
                                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  try {
    using namespace detail;
    Scenario s;
    s.source = source;
    if (!root.IsMap()) parse_fail(root, "a scenario is a mapping");
    allow_keys(root, {"id", "description", "domain", "field", "function", "flux", "suite", "tolerances", "experiments",
                      "output"});
    s.id = to_string(require(root, "id"));
    for (char c : s.id)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'))
        invalid(root["id"], "id may contain letters, digits, '-' and '_' only");
    if (root["description"]) s.description = to_string(root["description"]);
    s.domain = to_domain(require(root, "domain"));
    dims_ = s.domain.dim();
    if (root["field"]) s.field = to_field(root["field"], s.domain);
    if (root["function"]) s.function = to_function(root["function"], s.domain, "function u");
    if (root["flux"]) s.flux = to_flux(root["flux"], s.domain);
    if (const auto su = root["suite"]) {
      allow_keys(su, {"min_functions"});
      if (su["min_functions"]) s.min_functions = to_int(su["min_functions"]);
      if (s.min_functions < 1) invalid(su, "min_functions must be positive");
    }
    if (const auto t = root["tolerances"]) {
      allow_keys(t, {"abs", "rel", "quadrature"});
      if (t["abs"]) s.tol.abs = to_double(t["abs"]);
      if (t["rel"]) s.tol.rel = to_double(t["rel"]);
      if (t["quadrature"]) s.tol.quad = to_double(t["quadrature"]);
      if (!(s.tol.abs > 0.0) || !(s.tol.rel >= 0.0) || !(s.tol.quad > 0.0)) invalid(t, "tolerances must be positive");
    }
    const auto ex = require(root, "experiments");
    if (!ex.IsMap() || ex.size() == 0) parse_fail(ex, "experiments is a nonempty mapping");
    for (const auto& kv : ex) s.experiments.push_back(to_experiment(to_string(kv.first), kv.first, kv.second, s));
    s.output_dir = s.id;
    if (const auto o = root["output"]) {
      allow_keys(o, {"dir"});
      if (o["dir"]) s.output_dir = to_string(o["dir"]);
      const std::filesystem::path p(s.output_dir);
      if (p.is_absolute() || s.output_dir.find("..") != std::string::npos)
        invalid(o, "output dir must be a relative path inside the output root");
    }
    return s;
  } catch (const Error& e) {
    throw Error(e.kind(), source + ": " + std::string(e.what()).substr(std::string(to_string(e.kind())).size() + 2));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::Parse, source + ": line " + std::to_string(e.mark.line + 1) + ", column " +
                                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Parse, path.string() + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.filename().string());
}

/// Scenario files (*.yaml, *.yml) directly inside a directory, sorted by name.
inline std::vector<std::filesystem::path> scenario_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Parse, dir.string() + ": not a directory");
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".yaml" || ext == ".yml")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Runtime objects built from the declarations.
inline ParamField build_field(const Scenario& s) {
  const FieldDecl& f = *s.field;
  ParamField b;
  b.domain = s.domain;
  const int dim = s.domain.dim();
  auto comps = f.b;
  b.eval = [comps, dim](const Point& x, double t) {
    Vec v{};
    for (int i = 0; i < dim; ++i) v[std::size_t(i)] = comps[std::size_t(i)](VarValues{x[0], x[1], t, 0.0, 0.0, 0.0});
    return v;
  };
  std::vector<Expr> partial;
  partial.push_back(comps[0].diff(Var::X));
  if (dim == 2) partial.push_back(comps[1].diff(Var::Y));
  b.diva = [partial](const Point& x, double t) {
    double s = 0.0;
    for (const auto& e : partial) s += e(VarValues{x[0], x[1], t, 0.0, 0.0, 0.0});
    return s;
  };
  if (!f.trace_plus.empty()) {
    auto vec = [dim](std::vector<Expr> es) {
      return [es, dim](const SetPoint& sp, double t) {
        Vec v{};
        for (int i = 0; i < dim; ++i) v[std::size_t(i)] = es[std::size_t(i)](VarValues{sp.x[0], sp.x[1], t, 0.0, 0.0, 0.0});
        return v;
      };
    };
    b.trace_plus = vec(f.trace_plus);
    b.trace_minus = vec(f.trace_minus);
  }
  if (f.cantor_divergence) {
    const Expr e = *f.cantor_divergence;
    b.divc = CantorDivergence{CantorSpec::standard(), [e](double x, double t) { return e(x, 0.0, t); }};
  }
  b.sup_bound = f.sup;
  b.singular_set = f.singular;
  b.kinks = f.kinks;
  b.t_kinks = f.t_kinks;
  b.label = s.id;
  return b;
}

inline BVFunction build_function(const Domain& d, const FunctionDecl& f) {
  std::optional<std::pair<CantorSpec, double>> cantor;
  if (f.cantor) cantor = std::make_pair(CantorSpec::standard(), *f.cantor);
  return make_bv(d, f.u, f.jumps, f.sup, f.trace_plus, f.trace_minus, cantor, f.kinks);
}

inline FluxSpec build_flux(const Scenario& s) {
  const FluxDecl& f = *s.flux;
  return make_flux(s.id, f.A, build_function(s.domain, f.k), f.lo, f.hi, f.bound);
}

}  // namespace divchain
