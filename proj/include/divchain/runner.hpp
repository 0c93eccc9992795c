#pragma once

// Executes the experiments of a scenario and collects checks, a JSON report
// and CSV tables / plot series.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "divchain/oracle.hpp"
#include "divchain/scenario.hpp"

namespace divchain {

using Json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;

/// Process exit codes of the command-line runner.
enum ExitCode : int {
  kExitPass = 0,
  kExitCheckFailed = 1,
  kExitParse = 2,
  kExitValidation = 3,
  kExitNumerical = 4,
  kExitUsage = 64,
};

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Parse: return kExitParse;
    case ErrorKind::Integration:
    case ErrorKind::Solver:
    case ErrorKind::KineticViolation: return kExitNumerical;
    default: return kExitValidation;
  }
}

struct Check {
  std::string experiment;
  std::string name;
  bool pass = false;
  double value = 0.0;
  double limit = 0.0;
};

struct Table {
  std::string file;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct RunOptions {
  std::optional<double> tol_abs, tol_rel;
  int workers = 1;
};

struct RunResult {
  std::string id;
  std::string description;
  std::string source;
  std::string output_dir;
  Tolerances tol;
  std::vector<Check> checks;
  std::vector<Table> tables;
  Json experiments = Json::object();
  std::optional<std::pair<ErrorKind, std::string>> error;

  bool pass() const {
    if (error) return false;
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  int exit_code() const {
    if (error) return exit_code_for(error->first);
    return pass() ? kExitPass : kExitCheckFailed;
  }
  const Check* find(const std::string& experiment, const std::string& name) const {
    for (const auto& c : checks)
      if (c.experiment == experiment && c.name == name) return &c;
    return nullptr;
  }

  Json report() const {
    Json j;
    j["schema_version"] = kReportSchemaVersion;
    j["scenario"] = {{"id", id}, {"description", description}, {"source", source}};
    j["tolerances"] = {{"abs", tol.abs}, {"rel", tol.rel}, {"quadrature", tol.quad}};
    j["pass"] = pass();
    j["exit_code"] = exit_code();
    int failed = 0;
    Json cs = Json::array();
    for (const auto& c : checks) {
      failed += c.pass ? 0 : 1;
      cs.push_back({{"experiment", c.experiment}, {"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"limit", c.limit}});
    }
    j["summary"] = {{"checks", checks.size()}, {"failed", failed}};
    j["checks"] = cs;
    j["experiments"] = experiments;
    Json files = Json::array();
    for (const auto& t : tables) files.push_back(t.file);
    j["artifacts"] = files;
    if (error) j["error"] = {{"kind", to_string(error->first)}, {"message", error->second}};
    return j;
  }
};

namespace detail {

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::vector<std::string> nums(std::initializer_list<double> vs) {
  std::vector<std::string> out;
  for (double v : vs) out.push_back(num(v));
  return out;
}

/// Breakpoints every 1/4 of [lo, hi] and the boxes of a grid x grid partition of the domain.
inline std::vector<Box> partition(const Domain& d, int grid) {
  std::vector<Box> out;
  const Box& b = d.box;
  auto cut = [&](int axis, int i) {
    const auto& a = b.axis[std::size_t(axis)];
    return Interval{a.lo + a.length() * i / grid, i + 1 == grid ? a.hi : a.lo + a.length() * (i + 1) / grid};
  };
  for (int i = 0; i < grid; ++i) {
    if (d.dim() == 1) {
      Box x = b;
      x.axis[0] = cut(0, i);
      out.push_back(x);
      continue;
    }
    for (int j = 0; j < grid; ++j) {
      Box x = b;
      x.axis[0] = cut(0, i);
      x.axis[1] = cut(1, j);
      out.push_back(x);
    }
  }
  return out;
}

/// b(., t) held fixed in t.
inline ParamField frozen(const ParamField& b, double t) {
  ParamField f = b;
  auto ev = b.eval;
  f.eval = [ev, t](const Point& x, double) { return ev(x, t); };
  if (b.diva) {
    auto d = b.diva;
    f.diva = [d, t](const Point& x, double) { return d(x, t); };
  }
  if (b.trace_plus) {
    auto p = b.trace_plus, m = b.trace_minus;
    f.trace_plus = [p, t](const SetPoint& sp, double) { return p(sp, t); };
    f.trace_minus = [m, t](const SetPoint& sp, double) { return m(sp, t); };
  }
  if (b.divc) {
    auto dens = b.divc->density;
    f.divc->density = [dens, t](double x, double) { return dens(x, t); };
  }
  f.t_kinks.clear();
  return f;
}

/// Largest weak divergence of the kinetic phase field over a few (x, v) test functions.
inline double phase_divergence_worst(const FluxSpec& f, const Box& box) {
  const double xa = box.axis[0].lo, L = box.axis[0].length(), w = f.u_hi - f.u_lo;
  std::vector<TestFunction> psis{
      TestFunction::tensor_2d({xa + 0.5 * L, f.u_lo + 0.5 * w}, {0.05 * L, 0.05 * w}, {0.2 * L, 0.3 * w}),
      TestFunction::tensor_2d({xa + 0.6 * L, f.u_lo + 0.45 * w}, {0.0, 0.05 * w}, {0.15 * L, 0.3 * w}).oscillating(5.0 / L, {1, 1}),
      TestFunction::radial_2d({xa + 0.45 * L, f.u_lo + 0.55 * w}, 0.05 * std::min(L, w), 0.3 * std::min(L, w))};
  double worst = 0.0;
  for (double r : phase_field_divergence(f, psis)) worst = std::max(worst, std::abs(r));
  return worst;
}

class Runner {
 public:
  Runner(const Scenario& s, const RunOptions& o) : s_(s), opt_(o) {
    res_.id = s.id;
    res_.description = s.description;
    res_.source = s.source;
    res_.output_dir = s.output_dir;
    res_.tol = s.tol;
    if (o.tol_abs) res_.tol.abs = *o.tol_abs;
    if (o.tol_rel) res_.tol.rel = *o.tol_rel;
  }

  RunResult run() {
    std::string current;
    try {
      for (const auto& ex : s_.experiments) {
        current = ex.kind;
        if (ex.kind == "chain" || ex.kind == "bv-scalar") chain(ex);
        else if (ex.kind == "w11") w11(ex);
        else if (ex.kind == "volpert") volpert_reduction(ex);
        else if (ex.kind == "anzellotti") anzellotti(ex);
        else if (ex.kind == "product") product(ex);
        else if (ex.kind == "stimab") stimab(ex);
        else if (ex.kind == "green") green(ex);
        else if (ex.kind == "mollification") mollification(ex);
        else if (ex.kind == "conslaw") conslaw(ex);
        else if (ex.kind == "kato") kato(ex);
      }
    } catch (const Error& e) {
      res_.error = std::make_pair(e.kind(), current + ": " + e.what());
    } catch (const std::exception& e) {
      res_.error = std::make_pair(ErrorKind::Integration, current + ": " + e.what());
    }
    return std::move(res_);
  }

 private:
  const Scenario& s_;
  RunOptions opt_;
  RunResult res_;
  std::optional<ParamField> b_;
  std::optional<BVFunction> u_;
  std::optional<TestSuite> suite_;

  void add(const std::string& ex, const std::string& name, bool pass, double value, double limit) {
    res_.checks.push_back(Check{ex, name, pass, value, limit});
  }

  const ParamField& field() {
    if (!b_) b_ = build_field(s_);
    return *b_;
  }
  const BVFunction& fn() {
    if (!u_) u_ = build_function(s_.domain, *s_.function);
    return *u_;
  }

  std::vector<Component> curves() {
    auto c = field().singular_curves();
    const auto uc = fn().singular_curves();
    c.insert(c.end(), uc.begin(), uc.end());
    return c;
  }

  const TestSuite& suite() {
    if (!suite_) {
      std::vector<Component> sing = field().singular_set.comps;
      for (const auto& c : fn().jump_set.comps) {
        bool dup = false;
        for (const auto& n : sing) dup = dup || n.same_geometry(c);
        if (!dup) sing.push_back(c);
      }
      suite_ = make_test_suite(s_.domain, sing, s_.min_functions);
    }
    return *suite_;
  }

  CompareOptions compare_options() const {
    CompareOptions c;
    c.tol_abs = res_.tol.abs;
    c.tol_rel = res_.tol.rel;
    c.quad_tol = res_.tol.quad;
    c.workers = opt_.workers;
    return c;
  }

  /// v(x) = B(x, u(x)), from the declared closed form when there is one.
  PointwiseField composed(std::function<Vec(const Point&, double)> B) {
    auto u = std::make_shared<BVFunction>(fn());
    return [u, B](const Point& x) { return B(x, u->value(x)); };
  }
  PointwiseField oracle_field() {
    const int dim = s_.domain.dim();
    if (!s_.field->primitive.empty()) {
      auto P = s_.field->primitive;
      return composed([P, dim](const Point& x, double t) {
        Vec v{};
        for (int i = 0; i < dim; ++i) v[std::size_t(i)] = P[std::size_t(i)](VarValues{x[0], x[1], t, 0.0, 0.0, 0.0});
        return v;
      });
    }
    auto B = std::make_shared<PrimitiveField>(primitive(field()));
    return composed([B](const Point& x, double t) { return B->value(x, t); });
  }

  void primitive_check(const std::string& ex) {
    if (s_.field->primitive.empty()) return;
    const auto& b = field();
    const auto& P = s_.field->primitive;
    const int dim = s_.domain.dim();
    const Box& box = s_.domain.box;
    const double T = fn().sup_bound, h = 1e-3;
    double worst = 0.0;
    for (int i = 0; i <= 12; ++i)
      for (int j = 0; j <= (dim == 2 ? 12 : 0); ++j) {
        const Point x{box.axis[0].lo + box.axis[0].length() * (i + 0.37) / 13.5,
                      dim == 2 ? box.axis[1].lo + box.axis[1].length() * (j + 0.41) / 13.5 : 0.0};
        for (int k = 0; k <= 8; ++k) {
          const double t = -T + 2 * T * (k + 0.29) / 8.7;
          for (int c = 0; c < dim; ++c) {
            auto B = [&](double w) { return P[std::size_t(c)](VarValues{x[0], x[1], w, 0.0, 0.0, 0.0}); };
            const double d = (8 * (B(t + h) - B(t - h)) - (B(t + 2 * h) - B(t - 2 * h))) / (12 * h);
            worst = std::max({worst, std::abs(d - b.eval(x, t)[std::size_t(c)]), std::abs(B(0.0))});
          }
        }
      }
    const double lim = 1e-6 * std::max(1.0, b.sup_bound);
    add(ex, "primitive", worst <= lim, worst, lim);
  }

  Json compare_rows(const CompareReport& rep, const std::vector<const ChainRuleBreakdown*>& parts = {}) {
    Json rows = Json::array();
    const auto& su = suite();
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
      const auto& r = rep.rows[i];
      Json row = {{"label", r.label}, {"action", r.action}, {"weak", r.weak}, {"diff", r.diff},
                  {"weak_error", r.weak_error}, {"allowed", r.allowed}, {"pass", r.pass}};
      for (const auto* p : parts) {
        Json terms = Json::object();
        for (std::size_t k = 0; k < 5; ++k) terms[ChainRuleBreakdown::term_names[k]] = measure_apply(p->term(k), su.functions[i]);
        row["terms"] = terms;
      }
      rows.push_back(row);
    }
    return rows;
  }

  void oracle_checks(const std::string& ex, const CompareReport& rep) {
    double worst = 0.0;
    for (const auto& r : rep.rows) worst = std::max(worst, r.diff / r.allowed);
    add(ex, "oracle", rep.pass, worst, 1.0);
  }

  void compare_table(const std::string& ex, const CompareReport& rep) {
    Table t{ex + ".csv", {"label", "action", "weak", "diff", "allowed", "pass"}, {}};
    for (const auto& r : rep.rows) {
      auto row = std::vector<std::string>{r.label};
      for (const auto& v : nums({r.action, r.weak, r.diff, r.allowed})) row.push_back(v);
      row.push_back(r.pass ? "1" : "0");
      t.rows.push_back(row);
    }
    res_.tables.push_back(std::move(t));
  }

  /// x-y series along the domain (a horizontal line through the middle in 2D).
  void density_series(const std::string& ex, const ChainRuleBreakdown& r, const PointwiseField& v) {
    Table t{ex + "_density.csv", {"x", "u", "v", "total_ac", "diva", "ac_u"}, {}};
    const Box& box = s_.domain.box;
    const double y = s_.domain.dim() == 2 ? 0.5 * (box.axis[1].lo + box.axis[1].hi) + 1e-3 * box.axis[1].length() : 0.0;
    auto ac = [](const RadonMeasure& m, const Point& p) { return m.has_ac() ? m.ac(p) : 0.0; };
    for (int i = 0; i <= 400; ++i) {
      const Point p{box.axis[0].lo + box.axis[0].length() * (i + 0.5) / 401, y};
      t.rows.push_back(nums({p[0], fn().value(p), v(p)[0], ac(r.total, p), ac(r.term_diva, p), ac(r.term_ac_u, p)}));
    }
    res_.tables.push_back(std::move(t));
  }

  Json suite_json() {
    const auto& su = suite();
    Json st = Json::array();
    for (const auto& s : su.straddlers) st.push_back(s.size());
    return {{"functions", su.functions.size()}, {"avoiding", su.avoiding.size()}, {"straddlers", st}};
  }

  void suite_check(const std::string& ex) {
    const auto problems = suite_problems(suite(), s_.min_functions);
    add(ex, "suite", problems.empty(), double(problems.size()), 0.0);
  }

  void chain(const Experiment& ex) {
    const auto& b = field();
    const auto& u = fn();
    const auto r = ex.kind == "bv-scalar" ? chain_bv_scalar(b, u) : chain_dm(b, u);
    const RadonMeasure mu = ex.chain.wrong_measure ? negative_control(r.total) : r.total;
    const auto v = oracle_field();
    const auto rep = compare(mu, v, suite(), curves(), compare_options());
    suite_check(ex.kind);
    primitive_check(ex.kind);
    oracle_checks(ex.kind, rep);
    if (ex.kind == "chain") add(ex.kind, "jump_identity", r.lolo_gap <= 1e-8, r.lolo_gap, 1e-8);
    Json j;
    j["measure"] = ex.chain.wrong_measure ? "total+lebesgue" : "total";
    j["oracle_primitive"] = s_.field->primitive.empty() ? "quadrature" : "closed-form";
    j["suite"] = suite_json();
    j["max_diff"] = rep.max_diff;
    j["jump_identity_gap"] = r.lolo_gap;
    if (s_.domain.dim() == 1) {
      Json atoms = Json::array();
      for (const auto& jp : r.total.jumps)
        for (int c = 0; c < int(jp.set.comps.size()); ++c) {
          const auto sp = jp.set.sample(c, 0.0);
          atoms.push_back({{"x", sp.x[0]}, {"mass", jp.density(sp)}});
        }
      j["total_point_masses"] = atoms;
    }
    j["total_has_ac"] = r.total.has_ac();
    j["notes"] = r.notes;
    j["rows"] = compare_rows(rep, {&r});
    res_.experiments[ex.kind] = j;
    compare_table(ex.kind, rep);
    density_series(ex.kind, r, v);
  }

  /// Largest difference of the per-term actions of two breakdowns over the suite.
  double term_gap(const ChainRuleBreakdown& a, const ChainRuleBreakdown& b, Json& per_term) {
    double worst = 0.0;
    per_term = Json::object();
    for (std::size_t k = 0; k < 5; ++k) {
      double g = 0.0;
      for (const auto& phi : suite().functions)
        g = std::max(g, std::abs(measure_apply(a.term(k), phi) - measure_apply(b.term(k), phi)));
      per_term[ChainRuleBreakdown::term_names[k]] = g;
      worst = std::max(worst, g);
    }
    return worst;
  }

  void w11(const Experiment& ex) {
    const auto r = chain_w11(field(), fn());
    const auto dm = chain_dm(field(), fn());
    const auto rep = compare(r.total, oracle_field(), suite(), curves(), compare_options());
    suite_check(ex.kind);
    oracle_checks(ex.kind, rep);
    Json per;
    const double gap = term_gap(r, dm, per);
    add(ex.kind, "agrees_with_dm", gap <= 1e-9, gap, 1e-9);
    add(ex.kind, "t_integral_form", r.t_form_gap <= 1e-7, r.t_form_gap, 1e-7);
    res_.experiments[ex.kind] = {{"term_gap", per}, {"t_form_gap", r.t_form_gap}, {"max_diff", rep.max_diff},
                                 {"notes", r.notes}, {"rows", compare_rows(rep)}};
    compare_table(ex.kind, rep);
  }

  void volpert_reduction(const Experiment& ex) {
    const auto r = volpert(field(), fn());
    const auto dm = chain_dm(field(), fn());
    Json per;
    const double gap = term_gap(r, dm, per);
    add(ex.kind, "term_for_term", gap <= 1e-9, gap, 1e-9);
    const auto rep = compare(r.total, oracle_field(), suite(), curves(), compare_options());
    oracle_checks(ex.kind, rep);
    res_.experiments[ex.kind] = {{"term_gap", per}, {"max_diff", rep.max_diff}, {"rows", compare_rows(rep, {&r})}};
  }

  /// u* Div A assembled directly from the traces of u and the parts of Div A.
  RadonMeasure ustar_div(const ParamField& A) {
    auto u = std::make_shared<BVFunction>(fn());
    auto a = std::make_shared<ParamField>(A);
    RadonMeasure m(A.domain);
    if (A.diva) {
      m.ac = [u, a](const Point& p) { return u->value(p) * a->diva(p, 0.0); };
      m.ac_breaks = curves();
    }
    if (!A.singular_set.empty())
      m.jumps.push_back(JumpPart{A.singular_set, [u, a](const SetPoint& sp) {
                                   return precise_rep(*u, sp.x) * (a->beta_plus(sp, 0.0) - a->beta_minus(sp, 0.0));
                                 }});
    if (A.divc)
      m.cantor.push_back(CantorComponent{A.divc->spec, [u, a](double x) {
                                           return u->value(Point{x, 0.0}) * a->divc->density(x, 0.0);
                                         }});
    return m;
  }

  void anzellotti(const Experiment& ex) {
    const auto& A = field();
    const auto dm = chain_dm(A, fn());
    const auto pr = product_rule(A, [](double t) { return t; }, [](double) { return 1.0; }, fn());
    Json per;
    const double gap = term_gap(dm, pr, per);
    add(ex.kind, "term_for_term", gap <= 1e-9, gap, 1e-9);
    const auto pairing = anzellotti_pairing(A, fn());
    const RadonMeasure us = ustar_div(A);
    double fgap = 0.0;
    for (const auto& phi : suite().functions)
      fgap = std::max(fgap, std::abs(measure_apply(pairing.pairing, phi) + measure_apply(us, phi) - measure_apply(dm.total, phi)));
    add(ex.kind, "formula", fgap <= 1e-9, fgap, 1e-9);
    add(ex.kind, "pairing_support", pairing.max_off_support <= 1e-9, pairing.max_off_support, 1e-9);
    res_.experiments[ex.kind] = {{"term_gap", per}, {"formula_gap", fgap}, {"max_off_support", pairing.max_off_support}};
  }

  void product(const Experiment& ex) {
    const auto& A = field();
    const Expr h = ex.product.h, hp = h.diff(Var::T);
    auto hf = [h](double t) { return h(0.0, 0.0, t); };
    const auto r = product_rule(A, hf, [hp](double t) { return hp(0.0, 0.0, t); }, fn());
    auto u = std::make_shared<BVFunction>(fn());
    auto a = std::make_shared<ParamField>(A);
    const PointwiseField v = [u, a, hf](const Point& x) { return hf(u->value(x)) * a->eval(x, 0.0); };
    const auto rep = compare(r.total, v, suite(), curves(), compare_options());
    suite_check(ex.kind);
    oracle_checks(ex.kind, rep);
    res_.experiments[ex.kind] = {{"h", ex.product.source}, {"max_diff", rep.max_diff}, {"rows", compare_rows(rep, {&r})}};
    compare_table(ex.kind, rep);
  }

  std::vector<double> t_grid(int n) {
    const double T = fn().sup_bound;
    std::vector<double> ts;
    for (int i = 0; i < n; ++i) ts.push_back(-T + 2 * T * i / (n - 1));
    ts.push_back(0.0);
    for (double k : field().t_kinks)
      if (std::abs(k) <= T) ts.push_back(k);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    return ts;
  }

  void stimab(const Experiment& ex) {
    const auto& b = field();
    const auto sigma = sigma_of(b, t_grid(ex.stimab.t_samples));
    const auto r = chain_dm(b, fn());
    const auto rows = stimab_check(r, sigma, b.sup_bound, fn(), partition(s_.domain, ex.stimab.grid));
    Json js = Json::array();
    Table t{"stimab.csv", {"x0", "x1", "y0", "y1", "lhs", "rhs_literal", "rhs_scaled"}, {}};
    double worst = -std::numeric_limits<double>::infinity();
    bool ok = true;
    for (const auto& row : rows) {
      const auto& bx = row.box;
      worst = std::max(worst, row.lhs - row.rhs_literal);
      ok = ok && row.ok_literal;
      js.push_back({{"box", {bx.axis[0].lo, bx.axis[0].hi, bx.axis[1].lo, bx.axis[1].hi}}, {"lhs", row.lhs},
                    {"rhs_literal", row.rhs_literal}, {"rhs_scaled", row.rhs_scaled}, {"ok_literal", row.ok_literal}});
      t.rows.push_back(nums({bx.axis[0].lo, bx.axis[0].hi, bx.axis[1].lo, bx.axis[1].hi, row.lhs, row.rhs_literal, row.rhs_scaled}));
    }
    add(ex.kind, "bound", ok, worst, 1e-9);
    res_.experiments[ex.kind] = {{"M", b.sup_bound}, {"boxes", js}};
    res_.tables.push_back(std::move(t));
  }

  void green(const Experiment& ex) {
    Json js = Json::array();
    Table t{"green.csv", {"region", "lhs", "rhs", "diff", "tol"}, {}};
    const auto A = frozen(field(), ex.green.t);
    for (std::size_t i = 0; i < ex.green.regions.size(); ++i) {
      const auto& g = ex.green.regions[i];
      const auto r = green_check(A, g, ex.green.abs, ex.green.rel);
      const double diff = std::abs(r.lhs - r.rhs);
      add(ex.kind, "region" + std::to_string(i), r.pass, diff, r.tol);
      js.push_back({{"disc", g.disc}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"raw", r.raw}, {"eps", r.eps}, {"tol", r.tol}});
      auto row = nums({double(i), r.lhs, r.rhs, diff, r.tol});
      t.rows.push_back(row);
    }
    res_.experiments[ex.kind] = {{"t", ex.green.t}, {"regions", js}};
    res_.tables.push_back(std::move(t));
  }

  void mollification(const Experiment& ex) {
    const auto& b = field();
    Json js = Json::array();
    Table t{"mollification.csv", {"component", "t", "eps", "value", "deviation"}, {}};
    for (int c = 0; c < int(b.singular_set.comps.size()); ++c) {
      const auto sp = b.singular_set.sample(c, 0.5 * b.singular_set.comps[std::size_t(c)].length());
      for (double tv : ex.mollification.t) {
        const auto tab = mollification_study(b, tv, sp, ex.mollification.eps);
        const auto& last = tab.rows.back();
        const auto& prev = tab.rows[tab.rows.size() - 2];
        add(ex.kind, "tail_monotone/c" + std::to_string(c) + "/t" + num(tv), tab.tail_monotone, last.deviation,
            prev.deviation);
        Json rows = Json::array();
        for (const auto& r : tab.rows) {
          rows.push_back({{"eps", r.eps}, {"value", r.value}, {"deviation", r.deviation}});
          t.rows.push_back(nums({double(c), tv, r.eps, r.value, r.deviation}));
        }
        js.push_back({{"component", c}, {"x", {sp.x[0], sp.x[1]}}, {"t", tv}, {"target", tab.target}, {"rows", rows}});
      }
    }
    res_.experiments[ex.kind] = {{"points", js}};
    res_.tables.push_back(std::move(t));
  }

  std::vector<PhaseTest> phase_tests(const FluxSpec& f, double T) {
    const Box& box = s_.domain.box;
    const double a = box.axis[0].lo, L = box.axis[0].length(), lo = f.u_lo, w = f.u_hi - f.u_lo;
    std::vector<PhaseTest> out;
    for (double c : {0.35, 0.5, 0.65})
      for (double v : {0.4, 0.7})
        out.push_back({TestFunction::tensor_2d({a + c * L, 0.5 * T}, {0.025 * L, 0.1 * T}, {0.1 * L, 0.4 * T}),
                       TestFunction::plateau_1d(lo + v * w, 0.05 * w, 0.25 * w)});
    return out;
  }

  void conslaw(const Experiment& ex) {
    const auto& c = ex.conslaw;
    const FluxSpec f = build_flux(s_);
    const BVFunction u0 = build_function(s_.domain, *c.initial);
    {
      const double worst = phase_divergence_worst(f, s_.domain.box);
      add(ex.kind, "phase_divergence", worst <= 1e-7, worst, 1e-7);
      res_.experiments[ex.kind]["phase_divergence"] = worst;
    }
    Json runs = Json::array();
    Table summary{"conslaw.csv", {"cells", "dx", "steps", "mass_error", "min_density", "kinetic_mass", "worst_residual"}, {}};
    std::vector<double> identity_worst;
    std::vector<std::string> flagged;
    for (int n : c.cells) {
      const std::string tag = std::to_string(n);
      const GridState g = initial_state(f, u0, n);
      Trajectory tr;
      if (c.imposed) {
        std::vector<double> times;
        for (int i = 0; i <= c.imposed_steps; ++i) times.push_back(c.T * i / c.imposed_steps);
        const Expr e = *c.imposed;
        tr = trajectory_from(f, g, times, [e](double x, double t) { return e(x, 0.0, t); });
      } else {
        tr = fv_solve(f, g, c.T, c.cfl);
      }
      Json run;
      run["cells"] = n;
      run["dx"] = tr.dx;
      run["steps"] = tr.steps();
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& st : tr.states)
        for (double v : st) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      add(ex.kind, "range/" + tag, lo >= f.u_lo - 1e-12 && hi <= f.u_hi + 1e-12, std::max(f.u_lo - lo, hi - f.u_hi), 1e-12);
      double mass_err = 0.0;
      if (!c.imposed) {
        mass_err = std::abs(tr.mass(tr.steps()) - tr.mass(0) - tr.boundary_inflow);
        const double lim = 1e-11 * std::max(1.0, std::abs(tr.mass(0)));
        add(ex.kind, "mass/" + tag, mass_err <= lim, mass_err, lim);
      }
      const auto phis = residual_test_family(tr);
      double worst_res = -std::numeric_limits<double>::infinity();
      Json res = Json::array();
      for (const auto& e : c.entropies) {
        const auto S = e.make();
        const auto rep = entropy_residual(tr, S, phis);
        worst_res = std::max(worst_res, rep.worst);
        add(ex.kind, "entropy/" + S.label + "/" + tag, rep.worst <= c.residual_tol, rep.worst, c.residual_tol);
        if (rep.choice_flagged) flagged.push_back(S.label + "/" + tag);
        res.push_back({{"entropy", S.label}, {"worst", rep.worst}, {"worst_left", rep.worst_left},
                       {"worst_right", rep.worst_right}, {"max_choice_gap", rep.max_choice_gap},
                       {"choice_flagged", rep.choice_flagged},
                       {"left", rep.left}, {"right", rep.right}});
      }
      run["entropy_residual"] = res;
      const auto km = kinetic_measure(tr, 1e-8, false);
      add(ex.kind, "kinetic_sign/" + tag, km.min_density >= -1e-8, km.min_density, -1e-8);
      run["kinetic"] = {{"total_mass", km.total_mass}, {"min_density", km.min_density}, {"min_step", km.min_step},
                        {"min_cell", km.min_cell}, {"min_v", km.min_v}, {"max_cell_mass", km.max_cell_mass}};
      if (c.shock_mass && c.shock_mass->cells == n) {
        const auto& sm = *c.shock_mass;
        const double err = std::abs(km.total_mass - sm.expected);
        add(ex.kind, "shock_mass/" + tag, err <= sm.rel * std::abs(sm.expected), err, sm.rel * std::abs(sm.expected));
        run["shock_mass_expected"] = sm.expected;
      }
      if (c.kinetic_identity && identity_worst.size() < 2) {
        double wv = 0.0;
        for (double r : kinetic_identity_residual(km, phase_tests(f, c.T))) wv = std::max(wv, std::abs(r));
        identity_worst.push_back(wv);
        run["kinetic_identity_residual"] = wv;
      }
      runs.push_back(run);
      summary.rows.push_back(nums({double(n), tr.dx, double(tr.steps()), mass_err, km.min_density, km.total_mass, worst_res}));
      Table st{"conslaw_state_" + tag + ".csv", {"x", "u_initial", "u_final", "kinetic_mass"}, {}};
      for (int j = 0; j < tr.cells(); ++j)
        st.rows.push_back(nums({tr.center(j), tr.states.front()[std::size_t(j)], tr.states.back()[std::size_t(j)],
                                km.mass_per_cell[std::size_t(j)]}));
      res_.tables.push_back(std::move(st));
    }
    if (identity_worst.size() == 2)
      add(ex.kind, "kinetic_identity", identity_worst[1] < 0.75 * identity_worst[0], identity_worst[1], 0.75 * identity_worst[0]);
    res_.experiments[ex.kind]["flux"] = s_.flux->source;
    res_.experiments[ex.kind]["shape"] = f.shape == FluxShape::Bell ? "bell" : "valley";
    res_.experiments[ex.kind]["imposed"] = bool(c.imposed);
    res_.experiments[ex.kind]["runs"] = runs;
    res_.experiments[ex.kind]["representative_flags"] = flagged;
    res_.tables.push_back(std::move(summary));
  }

  /// L1 distance of the two runs after every shared time step.
  Table contraction_curve(const FluxSpec& f, const BVFunction& a, const BVFunction& b, const KatoOpts& k, int pair) {
    const int n = k.cells.back();
    const auto ga = initial_state(f, a, n), gb = initial_state(f, b, n);
    const Trajectory frame = make_trajectory_frame(f, ga);
    std::vector<double> ks = frame.k_cells;
    for (const auto& it : frame.interfaces) {
      ks.push_back(it.k_plus);
      ks.push_back(it.k_minus);
    }
    const double lam = speed_bound(f, ks);
    const auto ta = fv_solve(f, ga, k.T, k.cfl, lam), tb = fv_solve(f, gb, k.T, k.cfl, lam);
    Table t{"kato_curve_" + std::to_string(pair) + ".csv", {"t", "l1"}, {}};
    const std::size_t m = std::min(ta.states.size(), tb.states.size());
    for (std::size_t i = 0; i < m; ++i) t.rows.push_back(nums({ta.times[i], l1_distance(ta.states[i], tb.states[i], ta.dx)}));
    return t;
  }

  void kato(const Experiment& ex) {
    const auto& k = ex.kato;
    const FluxSpec f = build_flux(s_);
    Json pairs = Json::array();
    Table t{"kato.csv", {"pair", "cells", "dx", "l1_initial", "l1_final", "change", "deficit", "w_integral", "w_max"}, {}};
    for (std::size_t p = 0; p < k.pairs.size(); ++p) {
      const auto a = build_function(s_.domain, k.pairs[p].first), b = build_function(s_.domain, k.pairs[p].second);
      const auto tab = kato_check(f, a, b, k.T, k.cells, k.cfl, k.reference_cells);
      const std::string tag = "p" + std::to_string(p);
      Json rows = Json::array();
      for (const auto& r : tab.rows) {
        const std::string rt = tag + "/" + std::to_string(r.cells);
        add(ex.kind, "contraction/" + rt, r.change <= k.slope * r.dx, r.change, k.slope * r.dx);
        add(ex.kind, "w_sign/" + rt, r.w_max <= k.w_tol, r.w_max, k.w_tol);
        add(ex.kind, "w_integral/" + rt, r.w_integral <= 1e-6 + r.dx, r.w_integral, 1e-6 + r.dx);
        rows.push_back({{"cells", r.cells}, {"dx", r.dx}, {"l1_initial", r.l1_initial}, {"l1_final", r.l1_final},
                        {"kinetic_initial", r.kinetic_initial}, {"kinetic_final", r.kinetic_final}, {"change", r.change},
                        {"deficit", r.deficit}, {"w_integral", r.w_integral}, {"w_max", r.w_max},
                        {"w_integral_variant", r.w_integral_variant}, {"w_max_variant", r.w_max_variant}});
        t.rows.push_back(nums({double(p), double(r.cells), r.dx, r.l1_initial, r.l1_final, r.change, r.deficit, r.w_integral, r.w_max}));
      }
      Json ratios = Json::array();
      for (std::size_t i = 0; i + 1 < tab.rows.size(); ++i) {
        const double ratio = tab.rows[i].deficit / tab.rows[i + 1].deficit;
        ratios.push_back(ratio);
        add(ex.kind, "deficit_ratio/" + tag + "/" + std::to_string(tab.rows[i].cells) + "-" + std::to_string(tab.rows[i + 1].cells),
            ratio >= k.ratio_lo && ratio <= k.ratio_hi, ratio, k.ratio_hi);
      }
      pairs.push_back({{"a", k.pairs[p].first.source}, {"b", k.pairs[p].second.source}, {"reference_cells", tab.reference_cells},
                       {"reference_change", tab.reference_change}, {"rows", rows}, {"deficit_ratios", ratios}});
      res_.tables.push_back(contraction_curve(f, a, b, k, int(p)));
    }
    res_.experiments[ex.kind] = {{"flux", s_.flux->source}, {"T", k.T}, {"pairs", pairs}};
    res_.tables.push_back(std::move(t));
  }
};

}  // namespace detail

inline RunResult run_scenario(const Scenario& s, const RunOptions& opt = {}) { return detail::Runner(s, opt).run(); }

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
    out += "\n";
  }
  return out;
}

/// Writes report.json and the tables under root / output_dir; returns the directory.
inline std::filesystem::path write_artifacts(const RunResult& r, const std::filesystem::path& root) {
  const auto dir = root / r.output_dir;
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::Validation, "cannot write " + (dir / name).string());
    out << text;
  };
  put("report.json", r.report().dump(2) + "\n");
  for (const auto& t : r.tables) put(t.file, to_csv(t));
  return dir;
}

}  // namespace divchain
