#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <future>
#include <string>
#include <thread>
#include <vector>

#include "divchain/dmfield.hpp"
#include "divchain/measures.hpp"

namespace divchain {

using PointwiseField = std::function<Vec(const Point&)>;

struct TestSuite {
  std::vector<TestFunction> functions;
  std::vector<Point> centers;
  std::vector<double> scales;
  /// Singular components the suite was built around, with the indices of the straddling members.
  std::vector<Component> singular;
  std::vector<std::vector<int>> straddlers;
  /// Members whose support avoids every singular component.
  std::vector<int> avoiding;
};

namespace detail {

inline double distance_to(const Component& c, const Point& p) {
  if (c.shape == Shape::Point) return std::abs(p[0] - c.p0[0]);
  const double len = c.length();
  const int n = 256;
  double best = std::numeric_limits<double>::infinity();
  double sbest = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double s = len * i / n;
    const Point q = c.at(s);
    const double d = std::hypot(q[0] - p[0], q[1] - p[1]);
    if (d < best) best = d, sbest = s;
  }
  // golden-section polish around the coarse minimum
  double a = std::max(0.0, sbest - len / n), b = std::min(len, sbest + len / n);
  auto f = [&](double s) {
    const Point q = c.at(s);
    return std::hypot(q[0] - p[0], q[1] - p[1]);
  };
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double x1 = b - g * (b - a), x2 = a + g * (b - a);
    if (f(x1) < f(x2)) b = x2;
    else a = x1;
  }
  return std::min(best, f(0.5 * (a + b)));
}

/// Whether the open support of phi meets the component.
inline bool support_meets(const TestFunction& phi, const Component& c) {
  if (phi.dim == 1) return std::abs(c.p0[0] - phi.center[0]) < phi.support[0];
  if (phi.kind == TestKind::Radial) return distance_to(c, phi.center) < phi.support[0];
  const Box b = phi.support_box();
  const double len = c.length();
  const int n = 512;
  for (int i = 0; i <= n; ++i)
    if (b.contains(c.at(len * i / n), -1e-12)) return true;
  return false;
}

/// Largest support radius around p that keeps the support strictly inside the domain.
inline double room(const Domain& d, const Point& p) {
  double r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < d.dim(); ++i)
    r = std::min({r, p[std::size_t(i)] - d.box.axis[i].lo, d.box.axis[i].hi - p[std::size_t(i)]});
  return 0.95 * r;
}

inline TestFunction bump(int dim, const Point& c, double r, bool radial) {
  if (dim == 1) return TestFunction::plateau_1d(c[0], 0.4 * r, r);
  if (radial) return TestFunction::radial_2d(c, 0.4 * r, r);
  return TestFunction::tensor_2d(c, {0.4 * r, 0.4 * r}, {r, r});
}

}  // namespace detail

/// Deterministic test-function family for a domain and its singular components:
/// grid-placed bumps at several widths, oscillating variants, and at least three
/// members straddling each component.
inline TestSuite make_test_suite(const Domain& d, const std::vector<Component>& singular, int min_functions = 20) {
  TestSuite s;
  s.singular = singular;
  const int dim = d.dim();
  const double L = std::min(d.box.axis[0].length(), dim == 2 ? d.box.axis[1].length() : d.box.axis[0].length());
  s.scales = {0.3 * L, 0.15 * L, 0.07 * L};
  auto add = [&](TestFunction f, const std::string& label) {
    f.label = label;
    s.functions.push_back(f);
    s.centers.push_back(f.center);
  };
  // straddlers: samples along each component, alternating shapes and widths
  for (std::size_t c = 0; c < singular.size(); ++c) {
    const auto& comp = singular[c];
    std::vector<Point> at;
    if (comp.shape == Shape::Point) at = {comp.p0, comp.p0, comp.p0};
    else
      for (double q : {0.23, 0.5, 0.77}) at.push_back(comp.at(q * comp.length()));
    for (int k = 0; k < 3; ++k) {
      Point p = at[std::size_t(k)];
      // shift off the component so the straddle is not symmetric
      if (dim == 1) p[0] += (k - 1) * 0.02 * L;
      const double r = std::min(s.scales[std::size_t(k)], detail::room(d, p));
      if (!(r > 1e-6 * L)) continue;
      auto f = detail::bump(dim, p, r, k == 1);
      if (k == 2) f = f.oscillating(3.0 / r, {1.0, 0.5}, 0.4);
      add(f, "straddle" + std::to_string(c) + "_" + std::to_string(k));
    }
  }
  // grid of centers at each width
  const int per_axis = dim == 1 ? 7 : 3;
  int idx = 0;
  for (double r : s.scales) {
    for (int i = 0; i < per_axis; ++i)
      for (int j = 0; j < (dim == 2 ? per_axis : 1); ++j) {
        Point p{d.box.axis[0].lo + d.box.axis[0].length() * (i + 0.5) / per_axis, 0.0};
        if (dim == 2) p[1] = d.box.axis[1].lo + d.box.axis[1].length() * (j + 0.5) / per_axis;
        const double rr = std::min(r, detail::room(d, p));
        if (!(rr > 1e-6 * L)) continue;
        auto f = detail::bump(dim, p, rr, (i + j) % 2 == 1);
        if (idx % 3 == 2) f = f.oscillating(2.0 / rr, {0.6, 1.0}, 0.1 * idx);
        add(f, "grid" + std::to_string(idx++));
      }
    if (int(s.functions.size()) >= min_functions) break;
  }
  // small bumps filling up to the requested count, placed away from the components
  for (int k = 0; int(s.functions.size()) < min_functions && k < 200; ++k) {
    const double fx = std::fmod(0.5 + 0.618033988749895 * (k + 1), 1.0), fy = std::fmod(0.5 + 0.754877666246693 * (k + 1), 1.0);
    Point p{d.box.axis[0].lo + d.box.axis[0].length() * (0.05 + 0.9 * fx), 0.0};
    if (dim == 2) p[1] = d.box.axis[1].lo + d.box.axis[1].length() * (0.05 + 0.9 * fy);
    const double rr = std::min(0.05 * L, detail::room(d, p));
    if (!(rr > 1e-6 * L)) continue;
    add(detail::bump(dim, p, rr, k % 2 == 0).oscillating(1.5 / rr, {1.0, -0.3}), "fill" + std::to_string(k));
  }
  s.straddlers.assign(singular.size(), {});
  for (int i = 0; i < int(s.functions.size()); ++i) {
    bool meets = false;
    for (std::size_t c = 0; c < singular.size(); ++c)
      if (detail::support_meets(s.functions[std::size_t(i)], singular[c])) {
        s.straddlers[c].push_back(i);
        meets = true;
      }
    if (!meets) s.avoiding.push_back(i);
  }
  return s;
}

/// Size and straddle requirements of a suite, as a list of problems (empty when fine).
inline std::vector<std::string> suite_problems(const TestSuite& s, int min_functions = 20, int min_straddle = 3) {
  std::vector<std::string> out;
  if (int(s.functions.size()) < min_functions)
    out.push_back("suite has " + std::to_string(s.functions.size()) + " functions");
  for (std::size_t c = 0; c < s.straddlers.size(); ++c)
    if (int(s.straddlers[c].size()) < min_straddle)
      out.push_back("component " + std::to_string(c) + " is straddled by " + std::to_string(s.straddlers[c].size()) +
                    " functions");
  return out;
}

struct WeakValue {
  double value = 0.0;
  double error = 0.0;
  /// Values at the three tolerance levels, coarsest first.
  std::array<double, 3> levels{};
  bool converged = true;
};

/// -integral <grad phi, v> over phi's support, split along the given curves and
/// phi's own breaks; evaluated at tolerances tol, tol/2 and tol/4.
inline WeakValue weak_divergence(const PointwiseField& v, const TestFunction& phi, const std::vector<Component>& curves = {},
                                 double tol = 1e-10) {
  const int dim = phi.dim;
  std::vector<Component> br = curves;
  const auto pb = phi.breaks();
  br.insert(br.end(), pb.begin(), pb.end());
  WeakValue w;
  double last_err = 0.0;
  for (int k = 0; k < 3; ++k) {
    QuadConfig cfg;
    cfg.abs_tol = tol / double(1 << k);
    cfg.rel_tol = 0.0;
    cfg.max_intervals = dim == 1 ? 20000 : 4000;
    auto r = integrate_box([&](const Point& p) { return dot(phi.grad(p), v(p), dim); }, phi.support_box(), br, cfg);
    if (!r.converged) {
      std::ostringstream msg;
      msg << "weak divergence did not converge for test function '" << phi.label << "' at tolerance " << cfg.abs_tol
          << " after " << r.evaluations << " evaluations";
      throw Error(ErrorKind::Integration, msg.str());
    }
    w.levels[std::size_t(k)] = -r.value;
    last_err = r.error;
  }
  w.value = w.levels[2];
  w.error = std::max({2.0 * std::abs(w.levels[0] - w.levels[2]), 2.0 * std::abs(w.levels[1] - w.levels[2]), last_err,
                      1e-15 * std::max(1.0, std::abs(w.value))});
  return w;
}

struct CompareRow {
  std::string label;
  double action = 0.0;
  double weak = 0.0;
  double diff = 0.0;
  double weak_error = 0.0;
  double allowed = 0.0;
  bool pass = false;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  double max_diff = 0.0;
  bool pass = true;
  std::string summary() const {
    int bad = 0;
    for (const auto& r : rows) bad += r.pass ? 0 : 1;
    return std::string(pass ? "PASS" : "FAIL") + " " + std::to_string(rows.size() - std::size_t(bad)) + "/" +
           std::to_string(rows.size()) + " max_diff=" + std::to_string(max_diff);
  }
};

struct CompareOptions {
  double tol_abs = 1e-7;
  double tol_rel = 1e-6;
  double quad_tol = 1e-10;
  int workers = 1;
};

/// Action of mu on each suite member against the weak divergence of v.
inline CompareReport compare(const RadonMeasure& mu, const PointwiseField& v, const TestSuite& suite,
                             const std::vector<Component>& curves, const CompareOptions& opt = {}) {
  CompareReport rep;
  rep.rows.resize(suite.functions.size());
  auto one = [&](std::size_t i) {
    const auto& phi = suite.functions[i];
    CompareRow row;
    row.label = phi.label;
    row.action = measure_apply(mu, phi);
    const auto w = weak_divergence(v, phi, curves, opt.quad_tol);
    row.weak = w.value;
    row.weak_error = w.error;
    row.diff = std::abs(row.action - row.weak);
    row.allowed = std::max(opt.tol_abs, opt.tol_rel * std::max(std::abs(row.action), std::abs(row.weak)));
    row.pass = row.diff <= row.allowed;
    rep.rows[i] = row;
  };
  const std::size_t n = suite.functions.size();
  const int workers = std::max(1, std::min<int>(opt.workers, int(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) one(i);
  } else {
    std::vector<std::future<void>> jobs;
    for (int w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = std::size_t(w); i < n; i += std::size_t(workers)) one(i);
      }));
    for (auto& j : jobs) j.get();
  }
  for (const auto& r : rep.rows) {
    rep.max_diff = std::max(rep.max_diff, r.diff);
    rep.pass = rep.pass && r.pass;
  }
  return rep;
}

/// A deliberately wrong measure: mu plus Lebesgue measure on the domain.
inline RadonMeasure negative_control(const RadonMeasure& mu) { return mu + RadonMeasure::lebesgue(mu.domain, 1.0); }

struct MollificationRow {
  double eps = 0.0;
  double value = 0.0;
  double deviation = 0.0;
};

struct MollificationTable {
  double target = 0.0;
  std::vector<MollificationRow> rows;
  /// Deviation did not grow between the last two radii.
  bool tail_monotone = true;
};

/// <b_eps(x, t), nu> against (beta+ + beta-)/2 at a point of N for decreasing eps.
inline MollificationTable mollification_study(const ParamField& b, double t, const SetPoint& sp,
                                              const std::vector<double>& eps_list) {
  if (eps_list.empty()) throw Error(ErrorKind::Validation, "empty eps list");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw Error(ErrorKind::Validation, "eps must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw Error(ErrorKind::Validation, "eps list must be decreasing");
  }
  MollificationTable tab;
  tab.target = 0.5 * (b.beta_plus(sp, t) + b.beta_minus(sp, t));
  for (double e : eps_list) {
    MollificationRow row;
    row.eps = e;
    row.value = mollified_normal_trace(b, t, sp.x, e);
    row.deviation = std::abs(row.value - tab.target);
    tab.rows.push_back(row);
  }
  if (tab.rows.size() >= 2) {
    const auto& a = tab.rows[tab.rows.size() - 2];
    const auto& z = tab.rows.back();
    tab.tail_monotone = z.deviation <= a.deviation + 1e-13 * std::max(1.0, std::abs(tab.target));
  }
  return tab;
}

}  // namespace divchain
