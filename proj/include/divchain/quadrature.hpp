#pragma once

// Adaptive Gauss-Kronrod (7/15) quadrature on intervals, with forced
// breakpoints, plus an iterated 2D rule on boxes that splits the inner
// integral where declared curves cross each vertical line.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

#include "divchain/core.hpp"
#include "divchain/geometry.hpp"

namespace divchain {

struct QuadConfig {
  double abs_tol = 1e-10;
  double rel_tol = 0.0;
  int max_intervals = 4000;
  int presplit = 1;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
  long evaluations = 0;

  QuadResult& operator+=(const QuadResult& o) {
    value += o.value;
    error += o.error;
    converged = converged && o.converged;
    evaluations += o.evaluations;
    return *this;
  }
};

namespace detail {

inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                              0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gk15(F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  double resk = fc * kWgk[7], resg = fc * kWg[3], resabs = std::abs(resk);
  std::array<double, 7> f1{}, f2{};
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXgk[j];
    f1[j] = f(c - dx);
    f2[j] = f(c + dx);
    resk += kWgk[j] * (f1[j] + f2[j]);
    resabs += kWgk[j] * (std::abs(f1[j]) + std::abs(f2[j]));
    if (j % 2 == 1) resg += kWg[j / 2] * (f1[j] + f2[j]);
  }
  const double mean = resk * 0.5;
  double resasc = kWgk[7] * std::abs(fc - mean);
  for (int j = 0; j < 7; ++j) resasc += kWgk[j] * (std::abs(f1[j] - mean) + std::abs(f2[j] - mean));
  const double ah = std::abs(h);
  resasc *= ah;
  resabs *= ah;
  double err = std::abs((resk - resg) * h);
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / (50 * eps)) err = std::max(50 * eps * resabs, err);
  if (!std::isfinite(resk)) err = INFINITY;
  return Panel{a, b, resk * h, err};
}

}  // namespace detail

/// Global adaptive GK15 on [a, b], forced to split at every break inside (a, b).
template <class F>
QuadResult integrate(F&& f, double a, double b, const QuadConfig& cfg, const std::vector<double>& breaks = {}) {
  QuadResult out;
  if (a == b) return out;
  if (a > b) {
    out = integrate(f, b, a, cfg, breaks);
    out.value = -out.value;
    return out;
  }
  std::vector<double> pts{a};
  for (double x : breaks)
    if (x > a && x < b) pts.push_back(x);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  std::priority_queue<detail::Panel> heap;
  std::vector<detail::Panel> done;
  double total_err = 0.0, total_val = 0.0;
  const int pieces = std::max(1, cfg.presplit);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    for (int k = 0; k < pieces; ++k) {
      const double lo = pts[i] + (pts[i + 1] - pts[i]) * k / pieces;
      const double hi = k + 1 == pieces ? pts[i + 1] : pts[i] + (pts[i + 1] - pts[i]) * (k + 1) / pieces;
      auto p = detail::gk15(f, lo, hi);
      out.evaluations += 15;
      total_err += p.error;
      total_val += p.value;
      heap.push(p);
    }
  }
  const double min_width = 1e-14 * (std::abs(a) + std::abs(b) + (b - a));
  int count = int(heap.size());
  while (!heap.empty()) {
    const double tol = std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total_val));
    if (total_err <= tol) break;
    if (count >= cfg.max_intervals) {
      out.converged = false;
      break;
    }
    auto p = heap.top();
    heap.pop();
    if (p.b - p.a < min_width || !std::isfinite(p.error)) {
      done.push_back(p);
      if (!std::isfinite(p.error)) out.converged = false;
      continue;
    }
    const double m = 0.5 * (p.a + p.b);
    auto l = detail::gk15(f, p.a, m);
    auto r = detail::gk15(f, m, p.b);
    out.evaluations += 30;
    total_err += l.error + r.error - p.error;
    total_val += l.value + r.value - p.value;
    heap.push(l);
    heap.push(r);
    ++count;
  }
  while (!heap.empty()) {
    done.push_back(heap.top());
    heap.pop();
  }
  std::sort(done.begin(), done.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
  for (const auto& p : done) {
    out.value += p.value;
    out.error += p.error;
  }
  const double tol = std::max(cfg.abs_tol, cfg.rel_tol * std::abs(out.value));
  if (out.error > tol) out.converged = false;
  if (!std::isfinite(out.value)) out.converged = false;
  return out;
}

/// Extra inner breakpoints for the 2D rule: called with (x, ylo, yhi, out).
using InnerBreaks = std::function<void(double, double, double, std::vector<double>&)>;

namespace detail {
/// Runs `extra` on each piece of [lo, hi] between the known breaks `known`.
inline void extra_breaks_piecewise(const InnerBreaks& extra, double x, double lo, double hi, std::vector<double>& known) {
  std::vector<double> cuts{lo, hi};
  for (double v : known)
    if (v > lo && v < hi) cuts.push_back(v);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  // values exactly on a break belong to neither side, so each piece is scanned slightly inside
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double d = 1e-12 * (cuts[i + 1] - cuts[i]);
    extra(x, cuts[i] + d, cuts[i + 1] - d, known);
  }
}
}  // namespace detail

/// Iterated integral over a 2D box: outer in x, inner in y. The inner integral
/// is split at every crossing of {x} x R with a curve of `curves`; the outer
/// integral is split where that crossing pattern changes.
template <class F>
QuadResult integrate2d(F&& f, const Box& box, const std::vector<Component>& curves, const QuadConfig& cfg,
                       const InnerBreaks& extra = {}) {
  const double x0 = box.axis[0].lo, x1 = box.axis[0].hi, y0 = box.axis[1].lo, y1 = box.axis[1].hi;
  std::vector<double> xb;
  for (const auto& c : curves) c.x_critical(xb);
  for (std::size_t i = 0; i < curves.size(); ++i)
    for (std::size_t j = i + 1; j < curves.size(); ++j)
      for (const auto& p : intersections(curves[i], curves[j])) xb.push_back(p[0]);

  QuadConfig inner_cfg = cfg;
  inner_cfg.abs_tol = 0.1 * cfg.abs_tol / std::max(x1 - x0, 1e-300);
  QuadConfig outer_cfg = cfg;
  outer_cfg.abs_tol = 0.9 * cfg.abs_tol;

  QuadResult agg;
  std::vector<double> yb;
  auto g = [&](double x) {
    yb.clear();
    for (const auto& c : curves) c.vertical_intersections(x, yb);
    if (extra) detail::extra_breaks_piecewise(extra, x, y0, y1, yb);
    std::vector<double> local = yb;
    auto r = integrate([&](double y) { return f(Point{x, y}); }, y0, y1, inner_cfg, local);
    agg.evaluations += r.evaluations;
    agg.converged = agg.converged && r.converged;
    agg.error += 0.0;
    return r.value;
  };
  auto res = integrate(g, x0, x1, outer_cfg, xb);
  res.converged = res.converged && agg.converged;
  res.evaluations = agg.evaluations;
  return res;
}

/// Integral of f over a box in 1D or 2D, split along the given components.
template <class F>
QuadResult integrate_box(F&& f, const Box& box, const std::vector<Component>& breaks, const QuadConfig& cfg,
                         const InnerBreaks& extra = {}) {
  if (box.dim == 1) {
    std::vector<double> xs;
    for (const auto& c : breaks)
      if (c.shape == Shape::Point) xs.push_back(c.p0[0]);
    if (extra) detail::extra_breaks_piecewise(extra, 0.0, box.axis[0].lo, box.axis[0].hi, xs);
    return integrate([&](double x) { return f(Point{x, 0.0}); }, box.axis[0].lo, box.axis[0].hi, cfg, xs);
  }
  return integrate2d(f, box, breaks, cfg, extra);
}

/// Integral of g(SetPoint) d H^{N-1} over one component: a point value in 1D,
/// an arc-length integral in 2D split at the given parameters.
template <class G>
QuadResult integrate_component(G&& g, const RectifiableSet& set, int comp, const QuadConfig& cfg,
                               std::vector<double> params = {}) {
  const auto& c = set.comps.at(std::size_t(comp));
  if (set.dim == 1 || c.shape == Shape::Point) {
    QuadResult r;
    r.value = g(set.sample(comp, 0.0));
    r.evaluations = 1;
    return r;
  }
  return integrate([&](double s) { return g(set.sample(comp, s)); }, 0.0, c.length(), cfg, params);
}

/// Roots of h on [a, b] found by sign-change scanning on `n` cells and bisection.
template <class H>
void scan_roots(H&& h, double a, double b, int n, std::vector<double>& out) {
  if (!(b > a)) return;
  double xa = a, ha = h(a);
  for (int i = 1; i <= n; ++i) {
    const double xb = a + (b - a) * i / n;
    const double hb = h(xb);
    if (ha == 0.0) {
      out.push_back(xa);
    } else if (ha * hb < 0.0) {
      double lo = xa, hi = xb, hlo = ha;
      for (int it = 0; it < 100 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
        const double m = 0.5 * (lo + hi);
        const double hm = h(m);
        if ((hm < 0) == (hlo < 0)) {
          lo = m;
          hlo = hm;
        } else {
          hi = m;
        }
      }
      out.push_back(0.5 * (lo + hi));
    }
    xa = xb;
    ha = hb;
  }
}

}  // namespace divchain
