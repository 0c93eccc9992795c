#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "divchain/bv.hpp"
#include "divchain/dmfield.hpp"
#include "divchain/expr.hpp"

namespace divchain {

/// 1 if v < u, 1/2 if v = u, 0 if v > u.
inline double chi(double v, double u) { return v < u ? 1.0 : (v == u ? 0.5 : 0.0); }

/// Integral over v in [-R, R] of |chi(v, a) - chi(v, b)|, by quadrature split at a and b.
inline double cavalieri_integral(double a, double b, double R) {
  QuadConfig cfg;
  cfg.abs_tol = 1e-14;
  return integrate([&](double v) { return std::abs(chi(v, a) - chi(v, b)); }, -R, R, cfg, {a, b}).value;
}

enum class FluxShape { Bell, Valley };

/// Flux A(k(x), u) with A an expression in k and u and k a function of x.
struct FluxSpec {
  std::string id;
  Expr A;
  Expr A_u, A_k, A_uu, A_ku;
  BVFunction k;
  /// Range searched for interface states.
  double u_lo = 0.0, u_hi = 1.0;
  /// Declared L-infinity bound of solutions.
  double M = 1.0;
  FluxShape shape = FluxShape::Bell;

  double flux(double kv, double u) const { return A(0.0, 0.0, 0.0, kv, u); }
  double speed(double kv, double u) const { return A_u(0.0, 0.0, 0.0, kv, u); }

  /// b(x, u) = dA/du (k(x), u) as a parametrized field; N is the jump set of k.
  ParamField field() const {
    ParamField b;
    b.domain = k.domain;
    auto kk = std::make_shared<BVFunction>(k);
    auto au = A_u, aku = A_ku;
    b.eval = [kk, au](const Point& x, double t) { return Vec{au(0.0, 0.0, 0.0, kk->value(x), t), 0.0}; };
    b.diva = [kk, aku](const Point& x, double t) { return aku(0.0, 0.0, 0.0, kk->value(x), t) * kk->grad(x)[0]; };
    b.singular_set = k.jump_set;
    b.trace_plus = [kk, au](const SetPoint& sp, double t) { return Vec{au(0.0, 0.0, 0.0, kk->plus(sp), t), 0.0}; };
    b.trace_minus = [kk, au](const SetPoint& sp, double t) { return Vec{au(0.0, 0.0, 0.0, kk->minus(sp), t), 0.0}; };
    double m = 0.0;
    for (int i = 0; i <= 64; ++i) {
      const double x = k.domain.box.axis[0].lo + k.domain.box.axis[0].length() * i / 64;
      for (int j = 0; j <= 32; ++j) m = std::max(m, std::abs(speed(k.value(Point{x, 0.0}), -M + 2 * M * j / 32)));
    }
    b.sup_bound = m;
    b.kinks = k.kinks;
    b.label = id;
    return b;
  }
};

/// Builds a flux from A(k, u); A(k, 0) must vanish and A must be concave or convex in u.
inline FluxSpec make_flux(std::string id, const Expr& A, BVFunction k, double u_lo, double u_hi, double M) {
  if (k.dim() != 1) throw Error(ErrorKind::UnsupportedStructure, "conservation-law runs are one-dimensional");
  if (!(u_hi > u_lo)) throw Error(ErrorKind::Validation, "empty interface-state range");
  FluxSpec f;
  f.id = std::move(id);
  f.A = A;
  f.A_u = A.diff(Var::U);
  f.A_k = A.diff(Var::K);
  f.A_uu = f.A_u.diff(Var::U);
  f.A_ku = f.A_u.diff(Var::K);
  f.u_lo = u_lo;
  f.u_hi = u_hi;
  f.M = M;
  f.k = std::move(k);
  std::vector<double> ks;
  for (int i = 0; i <= 64; ++i) {
    const double x = f.k.domain.box.axis[0].lo + f.k.domain.box.axis[0].length() * (i + 0.5) / 65;
    ks.push_back(f.k.value(Point{x, 0.0}));
  }
  for (int c = 0; c < int(f.k.jump_set.comps.size()); ++c) {
    const auto sp = f.k.jump_set.sample(c, 0.0);
    ks.push_back(f.k.plus(sp));
    ks.push_back(f.k.minus(sp));
  }
  bool concave = true, convex = true;
  for (double kv : ks) {
    if (std::abs(f.flux(kv, 0.0)) > 1e-12)
      throw Error(ErrorKind::Validation, "flux must vanish at u = 0 for every k (B(x, 0) = 0)");
    for (int j = 0; j <= 64; ++j) {
      const double u = u_lo + (u_hi - u_lo) * j / 64;
      const double c = f.A_uu(0.0, 0.0, 0.0, kv, u);
      if (c > 1e-12) concave = false;
      if (c < -1e-12) convex = false;
    }
  }
  if (!concave && !convex)
    throw Error(ErrorKind::UnsupportedStructure, "flux must be concave or convex in u on the state range");
  f.shape = concave ? FluxShape::Bell : FluxShape::Valley;
  return f;
}

struct EntropyPair {
  std::string label;
  std::function<double(double)> S, dS, d2S;
  /// Points where S is not smooth enough for plain quadrature.
  std::vector<double> kinks;

  static EntropyPair quadratic() {
    return {"w^2/2", [](double w) { return 0.5 * w * w; }, [](double w) { return w; }, [](double) { return 1.0; }, {}};
  }
  static EntropyPair identity() {
    return {"w", [](double w) { return w; }, [](double) { return 1.0; }, [](double) { return 0.0; }, {}};
  }
  /// sqrt((w - c)^2 + delta^2), a smooth stand-in for |w - c|.
  static EntropyPair kruzkov(double c, double delta) {
    std::ostringstream name;
    name << "kruzkov(" << c << ")";
    return {name.str(),
            [c, delta](double w) { return std::hypot(w - c, delta); },
            [c, delta](double w) { return (w - c) / std::hypot(w - c, delta); },
            [c, delta](double w) {
              const double r = std::hypot(w - c, delta);
              return delta * delta / (r * r * r);
            },
            {c}};
  }
};

/// eta_i(x, v) = integral_0^v b_i(x, w) S'(w) dw as a parametrized field with the singular structure of b.
inline ParamField entropy_flux(const EntropyPair& S, const ParamField& b) {
  ParamField eta = b;
  auto bb = std::make_shared<ParamField>(b);
  auto dS = S.dS;
  auto kinks = S.kinks;
  auto wint = [kinks](const std::function<double(double)>& g, double v) {
    QuadConfig cfg;
    cfg.abs_tol = 1e-13;
    cfg.rel_tol = 1e-13;
    std::vector<double> br;
    for (double k : kinks)
      if (k > std::min(0.0, v) && k < std::max(0.0, v)) br.push_back(k);
    auto r = integrate(g, 0.0, v, cfg, br);
    if (!r.converged) throw Error(ErrorKind::Integration, "entropy flux quadrature did not converge");
    return r.value;
  };
  const int dim = b.dim();
  eta.eval = [bb, dS, wint, dim](const Point& x, double v) {
    Vec out{0.0, 0.0};
    for (int i = 0; i < dim; ++i)
      out[std::size_t(i)] = wint([&](double w) { return bb->eval(x, w)[std::size_t(i)] * dS(w); }, v);
    return out;
  };
  if (b.diva) {
    eta.diva = [bb, dS, wint](const Point& x, double v) { return wint([&](double w) { return bb->diva(x, w) * dS(w); }, v); };
  }
  auto trace = [bb, dS, wint, dim](int side) {
    return [bb, dS, wint, dim, side](const SetPoint& sp, double v) {
      Vec out{0.0, 0.0};
      for (int i = 0; i < dim; ++i)
        out[std::size_t(i)] = wint(
            [&](double w) { return (side > 0 ? bb->plus(sp, w) : bb->minus(sp, w))[std::size_t(i)] * dS(w); }, v);
      return out;
    };
  };
  if (!b.singular_set.empty()) {
    eta.trace_plus = trace(+1);
    eta.trace_minus = trace(-1);
  }
  eta.divc.reset();
  eta.label = "eta[" + S.label + "](" + b.label + ")";
  return eta;
}

namespace detail {

/// g(w) = s A(k, s w): concave on [lo, hi] after the reflection s = -1 of a convex flux.
struct ConcaveBranch {
  const FluxSpec* f = nullptr;
  double k = 0.0, s = 1.0, lo = 0.0, hi = 1.0, theta = 0.0;

  double g(double w) const { return s * f->flux(k, s * w); }
  double dg(double w) const { return f->speed(k, s * w); }

  void init() {
    if (dg(lo) <= 0.0) theta = lo;
    else if (dg(hi) >= 0.0) theta = hi;
    else {
      double a = lo, b = hi;
      for (int it = 0; it < 200 && b - a > 1e-15 * (1.0 + std::abs(a)); ++it) {
        const double m = 0.5 * (a + b);
        (dg(m) > 0.0 ? a : b) = m;
      }
      theta = 0.5 * (a + b);
    }
  }
  double demand(double u) const { return g(std::min(u, theta)); }
  double supply(double u) const { return g(std::max(u, theta)); }
  /// Solves g(w) = q on the increasing (free) or decreasing (congested) branch.
  double root(double q, bool free) const {
    double a = free ? lo : theta, b = free ? theta : hi;
    if (free) {
      if (q <= g(a)) return a;
      if (q >= g(b)) return b;
    } else {
      if (q >= g(a)) return a;
      if (q <= g(b)) return b;
    }
    for (int it = 0; it < 200 && b - a > 1e-15 * (1.0 + std::abs(a)); ++it) {
      const double m = 0.5 * (a + b);
      const bool below = g(m) < q;
      if (below == free) a = m;
      else b = m;
    }
    return 0.5 * (a + b);
  }
};

}  // namespace detail

/// Godunov flux at a face with left flux A(kL, .) and right flux A(kR, .).
struct FaceFlux {
  detail::ConcaveBranch L, R;
  double s = 1.0;

  FaceFlux() = default;
  FaceFlux(const FluxSpec& f, double kL, double kR) {
    s = f.shape == FluxShape::Bell ? 1.0 : -1.0;
    const double lo = s > 0 ? f.u_lo : -f.u_hi, hi = s > 0 ? f.u_hi : -f.u_lo;
    L = {&f, kL, s, lo, hi, 0.0};
    R = {&f, kR, s, lo, hi, 0.0};
    L.init();
    R.init();
  }
  double operator()(double a, double b) const { return s * std::min(L.demand(s * a), R.supply(s * b)); }
  /// Interface states (left, right) of the Riemann solution at the face.
  std::pair<double, double> traces(double a, double b) const {
    const double as = s * a, bs = s * b;
    const double q = std::min(L.demand(as), R.supply(bs));
    const double tol = 1e-14 * (1.0 + std::abs(q));
    const double tl = (std::abs(L.g(as) - q) <= tol && as <= L.theta) ? as : L.root(q, false);
    const double tr = (std::abs(R.g(bs) - q) <= tol && bs >= R.theta) ? bs : R.root(q, true);
    return {s * tl, s * tr};
  }
  /// Kinks of the flux as a function of the states (the sonic points).
  std::vector<double> kinks() const { return {s * L.theta, s * R.theta}; }
  /// Where v -> F(min(a, v), min(b, v)) switches between the demand and the supply side.
  std::optional<double> switch_point(double a, double b, double lo, double hi) const {
    auto h = [&](double v) { return L.demand(s * std::min(a, v)) - R.supply(s * std::min(b, v)); };
    double ha = h(lo), hb = h(hi);
    if (ha == 0.0 || hb == 0.0 || (ha < 0.0) == (hb < 0.0)) return std::nullopt;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
      const double m = 0.5 * (lo + hi), hm = h(m);
      if ((hm < 0.0) == (ha < 0.0)) {
        lo = m;
        ha = hm;
      } else {
        hi = m;
      }
    }
    return 0.5 * (lo + hi);
  }
};

struct GridState {
  double x0 = 0.0;
  double dx = 0.0;
  std::vector<double> averages;
  double time = 0.0;
  double cfl = 0.0;

  int cells() const { return int(averages.size()); }
  double center(int j) const { return x0 + (j + 0.5) * dx; }
  double face(int f) const { return x0 + f * dx; }
};

/// Cell averages of u0 on n uniform cells of the flux domain; every jump of k must sit on a face.
inline GridState initial_state(const FluxSpec& f, const BVFunction& u0, int n) {
  if (n < 2) throw Error(ErrorKind::Validation, "need at least two cells");
  if (!same_domain(f.k.domain, u0.domain)) throw Error(ErrorKind::DomainMismatch, "initial data and flux domains differ");
  GridState g;
  g.x0 = f.k.domain.box.axis[0].lo;
  g.dx = f.k.domain.box.axis[0].length() / n;
  for (const auto& c : f.k.jump_set.comps) {
    const double r = (c.p0[0] - g.x0) / g.dx;
    if (std::abs(r - std::round(r)) > 1e-9) throw Error(ErrorKind::Validation, "a jump of k does not sit on a cell face");
  }
  std::vector<double> br;
  for (const auto& c : u0.singular_curves()) br.push_back(c.p0[0]);
  g.averages.resize(std::size_t(n));
  QuadConfig cfg;
  cfg.abs_tol = 1e-14;
  for (int j = 0; j < n; ++j) {
    const double a = g.face(j), b = g.face(j + 1);
    std::vector<double> local;
    for (double x : br)
      if (x > a && x < b) local.push_back(x);
    g.averages[std::size_t(j)] =
        integrate([&](double x) { return u0.value(Point{x, 0.0}); }, a, b, cfg, local).value / g.dx;
  }
  for (double v : g.averages)
    if (std::abs(v) > f.M + 1e-12) throw Error(ErrorKind::Validation, "initial data leaves the declared invariant region");
  return g;
}

struct InterfaceTrace {
  int face = 0;
  double nu = 1.0;
  double k_plus = 0.0, k_minus = 0.0;
};

/// Piecewise constant in x and t: states[n] holds on [times[n], times[n+1]).
struct Trajectory {
  std::shared_ptr<const FluxSpec> flux;
  double x0 = 0.0, dx = 0.0, cfl = 0.0;
  std::vector<double> k_cells;
  std::vector<FaceFlux> faces;
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  /// face_flux[n][f] for f = 0..cells, used between times[n] and times[n+1].
  std::vector<std::vector<double>> face_flux;
  std::vector<InterfaceTrace> interfaces;
  /// Riemann interface states (left, right) per step and interface.
  std::vector<std::vector<std::pair<double, double>>> interface_states;
  double boundary_inflow = 0.0;
  double max_tv = 0.0;

  int cells() const { return int(k_cells.size()); }
  int steps() const { return int(times.size()) - 1; }
  double dt(int n) const { return times[std::size_t(n) + 1] - times[std::size_t(n)]; }
  double face_x(int f) const { return x0 + f * dx; }
  double center(int j) const { return x0 + (j + 0.5) * dx; }
  double mass(int n) const {
    double m = 0.0;
    for (double v : states[std::size_t(n)]) m += v * dx;
    return m;
  }
  /// Cell state with zero-gradient ghosts.
  double at(int n, int j) const {
    const auto& s = states[std::size_t(n)];
    return s[std::size_t(std::clamp(j, 0, cells() - 1))];
  }
};

namespace detail {

inline double total_variation(const std::vector<double>& u) {
  double tv = 0.0;
  for (std::size_t j = 1; j < u.size(); ++j) tv += std::abs(u[j] - u[j - 1]);
  return tv;
}

inline Trajectory make_trajectory_frame(const FluxSpec& f, const GridState& u0) {
  Trajectory tr;
  tr.flux = std::make_shared<FluxSpec>(f);
  tr.x0 = u0.x0;
  tr.dx = u0.dx;
  const int n = u0.cells();
  for (int j = 0; j < n; ++j) tr.k_cells.push_back(f.k.value(Point{u0.center(j), 0.0}));
  for (int fc = 0; fc <= n; ++fc) {
    const double kl = tr.k_cells[std::size_t(std::max(fc - 1, 0))], kr = tr.k_cells[std::size_t(std::min(fc, n - 1))];
    tr.faces.emplace_back(*tr.flux, kl, kr);
  }
  for (int c = 0; c < int(f.k.jump_set.comps.size()); ++c) {
    const auto sp = f.k.jump_set.sample(c, 0.0);
    InterfaceTrace it;
    it.face = int(std::lround((sp.x[0] - u0.x0) / u0.dx));
    it.nu = sp.normal[0];
    it.k_plus = f.k.plus(sp);
    it.k_minus = f.k.minus(sp);
    tr.interfaces.push_back(it);
  }
  return tr;
}

}  // namespace detail

/// First-order Godunov scheme with two-sided interface fluxes; the returned faces were
/// rebuilt against the trajectory's own copy of the flux.
/// A positive `speed_bound` fixes the time step to cfl dx / speed_bound (runs then share their step times).
inline Trajectory fv_solve(const FluxSpec& f, const GridState& u0, double T, double cfl, double speed_bound = 0.0) {
  if (!(cfl > 0.0 && cfl < 1.0)) throw Error(ErrorKind::Validation, "cfl must lie in (0, 1)");
  if (!(T >= 0.0)) throw Error(ErrorKind::Validation, "final time must be nonnegative");
  Trajectory tr = detail::make_trajectory_frame(f, u0);
  tr.cfl = cfl;
  const int n = u0.cells();
  const double dx = u0.dx;
  std::vector<double> u = u0.averages;
  tr.times.push_back(u0.time);
  tr.states.push_back(u);
  tr.max_tv = detail::total_variation(u);
  double t = u0.time;
  const double tend = u0.time + T;
  std::vector<double> F(std::size_t(n) + 1);
  while (t < tend - 1e-14 * std::max(1.0, tend)) {
    const auto [mn, mx] = std::minmax_element(u.begin(), u.end());
    double lam = 0.0;
    for (double kv : tr.k_cells) lam = std::max({lam, std::abs(f.speed(kv, *mn)), std::abs(f.speed(kv, *mx))});
    for (const auto& it : tr.interfaces)
      lam = std::max({lam, std::abs(f.speed(it.k_plus, *mn)), std::abs(f.speed(it.k_plus, *mx)),
                      std::abs(f.speed(it.k_minus, *mn)), std::abs(f.speed(it.k_minus, *mx))});
    if (speed_bound > 0.0) {
      if (lam > speed_bound * (1.0 + 1e-12)) throw Error(ErrorKind::Solver, "characteristic speed exceeds the fixed bound");
      lam = speed_bound;
    }
    double dt = lam > 0.0 ? cfl * dx / lam : tend - t;
    dt = std::min(dt, tend - t);
    while (lam * dt / dx > cfl * (1.0 + 1e-12)) dt *= 0.5;
    for (int fc = 0; fc <= n; ++fc) {
      const double a = u[std::size_t(std::max(fc - 1, 0))], b = u[std::size_t(std::min(fc, n - 1))];
      F[std::size_t(fc)] = tr.faces[std::size_t(fc)](a, b);
    }
    std::vector<std::pair<double, double>> its;
    for (const auto& it : tr.interfaces)
      its.push_back(tr.faces[std::size_t(it.face)].traces(u[std::size_t(it.face - 1)], u[std::size_t(it.face)]));
    for (int j = 0; j < n; ++j) {
      u[std::size_t(j)] -= dt / dx * (F[std::size_t(j) + 1] - F[std::size_t(j)]);
      if (!std::isfinite(u[std::size_t(j)])) throw Error(ErrorKind::Solver, "non-finite state at cell " + std::to_string(j));
      if (std::abs(u[std::size_t(j)]) > f.M + 1e-9)
        throw Error(ErrorKind::Solver, "state leaves the invariant region at cell " + std::to_string(j));
    }
    tr.boundary_inflow += dt * (F.front() - F.back());
    t += dt;
    tr.face_flux.push_back(F);
    tr.interface_states.push_back(std::move(its));
    tr.times.push_back(t);
    tr.states.push_back(u);
    tr.max_tv = std::max(tr.max_tv, detail::total_variation(u));
  }
  return tr;
}

/// A trajectory whose states are sampled from a given function of (x, t) at the given times.
inline Trajectory trajectory_from(const FluxSpec& f, const GridState& grid, const std::vector<double>& times,
                                  const std::function<double(double, double)>& u) {
  Trajectory tr = detail::make_trajectory_frame(f, grid);
  const int n = grid.cells();
  QuadConfig cfg;
  cfg.abs_tol = 1e-13;
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::vector<double> s(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
      s[std::size_t(j)] =
          integrate([&](double x) { return u(x, times[i]); }, grid.face(j), grid.face(j + 1), cfg).value / grid.dx;
    tr.times.push_back(times[i]);
    tr.states.push_back(std::move(s));
  }
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    std::vector<double> F(std::size_t(n) + 1);
    for (int fc = 0; fc <= n; ++fc) F[std::size_t(fc)] = tr.faces[std::size_t(fc)](tr.at(int(i), fc - 1), tr.at(int(i), fc));
    tr.face_flux.push_back(std::move(F));
    std::vector<std::pair<double, double>> its;
    for (const auto& it : tr.interfaces)
      its.push_back(tr.faces[std::size_t(it.face)].traces(tr.at(int(i), it.face - 1), tr.at(int(i), it.face)));
    tr.interface_states.push_back(std::move(its));
  }
  for (const auto& s : tr.states) tr.max_tv = std::max(tr.max_tv, detail::total_variation(s));
  return tr;
}

namespace detail {

// three-point Gauss-Legendre on [a, b]
template <class G>
double gl3(G&& g, double a, double b) {
  static constexpr double x[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static constexpr double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += w[i] * g(c + h * x[i]);
  return s * h;
}

// five-point Gauss-Legendre on [a, b]
template <class G>
double gl5(G&& g, double a, double b) {
  static constexpr double x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
  static constexpr double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                                  0.2369268850561891};
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += w[i] * g(c + h * x[i]);
  return s * h;
}

/// Composite five-point rule on [a, b] split at the breaks, each piece cut into `sub` parts.
template <class G>
double gl5_pieces(G&& g, double a, double b, const std::vector<double>& breaks, int sub = 2) {
  if (!(b > a)) return 0.0;
  std::vector<double> pts{a};
  for (double x : breaks)
    if (x > a && x < b) pts.push_back(x);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    for (int q = 0; q < sub; ++q)
      s += gl5(g, pts[i] + (pts[i + 1] - pts[i]) * q / sub, pts[i] + (pts[i + 1] - pts[i]) * (q + 1) / sub);
  return s;
}

inline double eta_value(const FluxSpec& f, const EntropyPair& S, double kv, double v) {
  QuadConfig cfg;
  cfg.abs_tol = 1e-14;
  cfg.rel_tol = 1e-13;
  std::vector<double> br;
  for (double c : S.kinks)
    if (c > std::min(0.0, v) && c < std::max(0.0, v)) br.push_back(c);
  return integrate([&](double w) { return f.speed(kv, w) * S.dS(w); }, 0.0, v, cfg, br).value;
}

}  // namespace detail

struct ResidualReport {
  /// Residual per test function with the interface representative taken from the left / right cell.
  std::vector<double> left, right;
  double worst = -std::numeric_limits<double>::infinity();
  double worst_left = -std::numeric_limits<double>::infinity();
  double worst_right = -std::numeric_limits<double>::infinity();
  double max_choice_gap = 0.0;
  /// The two representatives disagree by more than 10 dx on some test function.
  bool choice_flagged = false;
  double dx = 0.0;
};

/// Nonnegative (x, t) test functions inside the spatial domain and (0, T).
inline std::vector<TestFunction> residual_test_family(const Trajectory& tr, int nx = 4, int nt = 2) {
  std::vector<TestFunction> out;
  const double a = tr.x0, L = tr.dx * tr.cells();
  const double t0 = tr.times.front(), T = tr.times.back() - t0;
  const double hx = 0.5 * L / nx, ht = 0.5 * T / nt;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nt; ++j) {
      auto f = TestFunction::tensor_2d({a + (2 * i + 1) * hx, t0 + (2 * j + 1) * ht}, {0.3 * hx, 0.3 * ht},
                                       {0.95 * hx, 0.95 * ht});
      f.label = "phi" + std::to_string(i) + "_" + std::to_string(j);
      out.push_back(f);
    }
  // wider functions over the middle
  auto w = TestFunction::tensor_2d({a + 0.5 * L, t0 + 0.5 * T}, {0.2 * L, 0.2 * T}, {0.45 * L, 0.45 * T});
  w.label = "phi_wide";
  out.push_back(w);
  return out;
}

/// Action of dt S(u) + Div eta(x, u) - Div eta|_{v=u_hat} + S'(u_hat) Div B|_{v=u_hat} on each phi(x, t).
///
/// Cells pair with phi integrated over the cell at the end of each step; the entropy flux at a
/// face is eta evaluated at the Riemann state on that side of the face.
inline ResidualReport entropy_residual(const Trajectory& tr, const EntropyPair& S, const std::vector<TestFunction>& phis) {
  const auto& f = *tr.flux;
  const int n = tr.cells(), steps = tr.steps();
  ResidualReport rep;
  rep.dx = tr.dx;
  if (phis.empty()) return rep;
  Box win = phis.front().support_box();
  for (const auto& phi : phis) {
    const Box b = phi.support_box();
    for (int i = 0; i < 2; ++i) {
      win.axis[std::size_t(i)].lo = std::min(win.axis[std::size_t(i)].lo, b.axis[std::size_t(i)].lo);
      win.axis[std::size_t(i)].hi = std::max(win.axis[std::size_t(i)].hi, b.axis[std::size_t(i)].hi);
    }
  }
  const int jlo = std::max(0, int(std::floor((win.axis[0].lo - tr.x0) / tr.dx)) - 1);
  const int jhi = std::min(n - 1, int(std::ceil((win.axis[0].hi - tr.x0) / tr.dx)) + 1);
  auto jump_term = [&](int fc, double uh) {
    const double kl = tr.faces[std::size_t(fc)].L.k, kr = tr.faces[std::size_t(fc)].R.k;
    const double deta = detail::eta_value(f, S, kr, uh) - detail::eta_value(f, S, kl, uh);
    return deta - S.dS(uh) * (f.flux(kr, uh) - f.flux(kl, uh));
  };
  std::vector<double> acc_l(phis.size(), 0.0), acc_r(phis.size(), 0.0);
  std::vector<double> QL(std::size_t(n) + 1), QR(std::size_t(n) + 1), JL(std::size_t(n) + 1), JR(std::size_t(n) + 1);
  for (int s = 0; s < steps; ++s) {
    const double t1 = tr.times[std::size_t(s) + 1], dt = tr.dt(s);
    if (t1 < win.axis[1].lo || tr.times[std::size_t(s)] > win.axis[1].hi) continue;
    for (int fc = jlo; fc <= jhi + 1; ++fc) {
      const auto& face = tr.faces[std::size_t(fc)];
      const double a = tr.at(s, fc - 1), b = tr.at(s, fc);
      const auto [tl, trr] = face.traces(a, b);
      QL[std::size_t(fc)] = detail::eta_value(f, S, face.L.k, tl);
      QR[std::size_t(fc)] = detail::eta_value(f, S, face.R.k, trr);
      if (face.L.k != face.R.k && fc > 0 && fc < n) {
        JL[std::size_t(fc)] = jump_term(fc, a);
        JR[std::size_t(fc)] = jump_term(fc, b);
      } else {
        JL[std::size_t(fc)] = JR[std::size_t(fc)] = 0.0;
      }
    }
    for (std::size_t p = 0; p < phis.size(); ++p) {
      const auto& phi = phis[p];
      const Box sb = phi.support_box();
      if (t1 <= sb.axis[1].lo || tr.times[std::size_t(s)] >= sb.axis[1].hi) continue;
      double cells = 0.0, face_l = 0.0, face_r = 0.0;
      for (int j = jlo; j <= jhi; ++j) {
        const double xa = tr.face_x(j), xb = tr.face_x(j + 1);
        if (xb <= sb.axis[0].lo || xa >= sb.axis[0].hi) continue;
        const double w = detail::gl3([&](double x) { return phi.value({x, t1}); }, xa, xb);
        const double dS = S.S(tr.states[std::size_t(s) + 1][std::size_t(j)]) - S.S(tr.states[std::size_t(s)][std::size_t(j)]);
        cells += (dS + dt / tr.dx * (QL[std::size_t(j) + 1] - QR[std::size_t(j)])) * w;
      }
      for (int fc = jlo + 1; fc <= jhi; ++fc) {
        if (JL[std::size_t(fc)] == 0.0 && JR[std::size_t(fc)] == 0.0) continue;
        const double w = dt * phi.value({tr.face_x(fc), t1});
        face_l -= w * JL[std::size_t(fc)];
        face_r -= w * JR[std::size_t(fc)];
      }
      acc_l[p] += cells + face_l;
      acc_r[p] += cells + face_r;
    }
  }
  for (std::size_t p = 0; p < phis.size(); ++p) {
    rep.left.push_back(acc_l[p]);
    rep.right.push_back(acc_r[p]);
    rep.worst_left = std::max(rep.worst_left, acc_l[p]);
    rep.worst_right = std::max(rep.worst_right, acc_r[p]);
    rep.max_choice_gap = std::max(rep.max_choice_gap, std::abs(acc_l[p] - acc_r[p]));
  }
  rep.worst = std::max(rep.worst_left, rep.worst_right);
  rep.choice_flagged = rep.max_choice_gap > 10.0 * tr.dx;
  return rep;
}

/// Discrete kinetic defect measure of a trajectory; density per unit (t, x, v) on each cell-step.
struct KineticMeasure {
  std::shared_ptr<const Trajectory> traj;
  double v_lo = 0.0, v_hi = 0.0;
  double total_mass = 0.0;
  double min_density = 0.0;
  int min_step = -1, min_cell = -1;
  double min_v = 0.0;
  /// Largest mass of a single cell-step.
  double max_cell_mass = 0.0;
  /// Time-integrated mass per cell, and space-integrated mass per step.
  std::vector<double> mass_per_cell, mass_per_step;

  double density(int s, int j, double v) const {
    const auto& tr = *traj;
    const double dt = tr.dt(s), dx = tr.dx;
    const double u0 = tr.at(s, j), u1 = tr.states[std::size_t(s) + 1][std::size_t(j)];
    const auto& fl = tr.faces[std::size_t(j)];
    const auto& fr = tr.faces[std::size_t(j) + 1];
    const double gl = fl(std::min(tr.at(s, j - 1), v), std::min(u0, v));
    const double gr = fr(std::min(u0, v), std::min(tr.at(s, j + 1), v));
    const double divB = fr(v, v) - fl(v, v);
    return (std::min(u1, v) - std::min(u0, v)) / dt + (gr - gl) / dx - chi(v, u1) * divB / dx;
  }

  /// v-points where the density of a cell-step may be nonsmooth.
  std::vector<double> v_breaks(int s, int j) const {
    const auto& tr = *traj;
    std::vector<double> b{v_lo, v_hi, tr.at(s, j - 1), tr.at(s, j), tr.at(s, j + 1), tr.states[std::size_t(s) + 1][std::size_t(j)]};
    const double inf = std::numeric_limits<double>::infinity();
    for (int fc : {j, j + 1}) {
      const auto& face = tr.faces[std::size_t(fc)];
      for (double k : face.kinks()) b.push_back(k);
      for (auto ab : {std::pair{tr.at(s, fc - 1), tr.at(s, fc)}, std::pair{inf, inf}})
        if (auto r = face.switch_point(ab.first, ab.second, v_lo, v_hi)) b.push_back(*r);
    }
    std::erase_if(b, [&](double x) { return x < v_lo || x > v_hi; });
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
  }
};

namespace detail {

inline bool cell_inactive(const Trajectory& tr, int s, int j) {
  const double u = tr.at(s, j);
  return tr.at(s, j - 1) == u && tr.at(s, j + 1) == u && tr.states[std::size_t(s) + 1][std::size_t(j)] == u &&
         tr.faces[std::size_t(j)].L.k == tr.faces[std::size_t(j)].R.k &&
         tr.faces[std::size_t(j) + 1].L.k == tr.faces[std::size_t(j) + 1].R.k;
}

}  // namespace detail

/// Assembles m from the discrete kinetic equation on v in [-|u|_inf - 1, |u|_inf + 1].
/// Throws a kinetic-violation error when some cell density drops below -slack.
inline KineticMeasure kinetic_measure(const Trajectory& tr, double slack = 1e-8, bool raise = true) {
  KineticMeasure km;
  km.traj = std::make_shared<Trajectory>(tr);
  double sup = 0.0;
  for (const auto& s : tr.states)
    for (double v : s) sup = std::max(sup, std::abs(v));
  km.v_lo = -sup - 1.0;
  km.v_hi = sup + 1.0;
  const int n = tr.cells(), steps = tr.steps();
  km.mass_per_cell.assign(std::size_t(n), 0.0);
  km.mass_per_step.assign(std::size_t(steps), 0.0);
  for (int s = 0; s < steps; ++s)
    for (int j = 0; j < n; ++j) {
      if (detail::cell_inactive(tr, s, j)) continue;
      const auto br = km.v_breaks(s, j);
      double mass = 0.0;
      for (std::size_t i = 0; i + 1 < br.size(); ++i) {
        const double a = br[i], b = br[i + 1];
        mass += detail::gl5([&](double v) { return km.density(s, j, v); }, a, b);
        for (double v : {a + 1e-9 * (b - a), 0.5 * (a + b), b - 1e-9 * (b - a)}) {
          const double d = km.density(s, j, v);
          if (d < km.min_density) {
            km.min_density = d;
            km.min_step = s;
            km.min_cell = j;
            km.min_v = v;
          }
        }
      }
      const double w = mass * tr.dt(s) * tr.dx;
      km.mass_per_cell[std::size_t(j)] += w;
      km.mass_per_step[std::size_t(s)] += w;
      km.total_mass += w;
      km.max_cell_mass = std::max(km.max_cell_mass, std::abs(w));
    }
  if (raise && km.min_density < -slack)
    throw Error(ErrorKind::KineticViolation, "kinetic measure density " + std::to_string(km.min_density) + " at step " +
                                                 std::to_string(km.min_step) + ", cell " + std::to_string(km.min_cell) +
                                                 ", v = " + std::to_string(km.min_v));
  return km;
}

/// psi(t, x, v) = phi(x, t) rho(v) for the kinetic identity check.
struct PhaseTest {
  TestFunction phi;
  TestFunction rho;
};

/// <dt chi + Div_{x,v}(a chi) - dv m, psi> for each psi. At an interface face chi is weighted by
/// the split of B+ - B- that the interface flux F(v, v) induces on the two adjacent cells.
inline std::vector<double> kinetic_identity_residual(const KineticMeasure& km, const std::vector<PhaseTest>& psis) {
  const auto& tr = *km.traj;
  const auto& f = *tr.flux;
  const int n = tr.cells(), steps = tr.steps();
  std::vector<double> out;
  QuadConfig cfg;
  cfg.abs_tol = 1e-13;
  for (const auto& ps : psis) {
    const Box sb = ps.phi.support_box();
    const double rlo = ps.rho.support_box().axis[0].lo, rhi = ps.rho.support_box().axis[0].hi;
    auto rho = [&](double v) { return ps.rho.value({v, 0.0}); };
    auto drho = [&](double v) { return ps.rho.grad({v, 0.0})[0]; };
    std::vector<double> rho_breaks{ps.rho.center[0] - ps.rho.plateau[0], ps.rho.center[0] + ps.rho.plateau[0]};
    std::erase_if(rho_breaks, [&](double x) { return x <= rlo || x >= rhi; });
    auto below = [&](const std::function<double(double)>& g, double u) {
      return detail::gl5_pieces(g, rlo, std::min(u, rhi), rho_breaks);
    };
    double total = 0.0;
    for (int s = 0; s < steps; ++s) {
      const double t0 = tr.times[std::size_t(s)], t1 = tr.times[std::size_t(s) + 1];
      if (t1 <= sb.axis[1].lo || t0 >= sb.axis[1].hi) continue;
      for (int j = 0; j < n; ++j) {
        const double xa = tr.face_x(j), xb = tr.face_x(j + 1);
        if (xb <= sb.axis[0].lo || xa >= sb.axis[0].hi) continue;
        const double u = tr.at(s, j), kv = tr.k_cells[std::size_t(j)];
        const double dphi_t = detail::gl3([&](double x) { return ps.phi.value({x, t0}) - ps.phi.value({x, t1}); }, xa, xb);
        const double dphi_x = detail::gl3([&](double t) { return ps.phi.value({xb, t}) - ps.phi.value({xa, t}); }, t0, t1);
        total += dphi_t * below(rho, u);
        total -= dphi_x * below([&](double v) { return f.speed(kv, v) * rho(v); }, u);
        if (!detail::cell_inactive(tr, s, j)) {
          const double phim = detail::gl3([&](double t) { return ps.phi.value({tr.center(j), t}); }, t0, t1) * tr.dx;
          auto br = km.v_breaks(s, j);
          br.insert(br.end(), rho_breaks.begin(), rho_breaks.end());
          const double mv = detail::gl5_pieces([&](double v) { return km.density(s, j, v) * drho(v); }, rlo, rhi, br);
          total += phim * mv;
        }
      }
      for (int fc = 1; fc < n; ++fc) {
        const double kl = tr.k_cells[std::size_t(fc - 1)], kr = tr.k_cells[std::size_t(fc)];
        if (kl == kr) continue;
        const double xf = tr.face_x(fc);
        if (xf <= sb.axis[0].lo || xf >= sb.axis[0].hi) continue;
        const double w = detail::gl3([&](double t) { return ps.phi.value({xf, t}); }, t0, t1);
        const double ul = tr.at(s, fc - 1), ur = tr.at(s, fc);
        const auto& face = tr.faces[std::size_t(fc)];
        auto g = [&](double v) {
          const double fs = face(v, v);
          return (chi(v, ul) * (fs - f.flux(kl, v)) + chi(v, ur) * (f.flux(kr, v) - fs)) * drho(v);
        };
        std::vector<double> br{ul, ur};
        for (double k : face.kinks()) br.push_back(k);
        const double inf = std::numeric_limits<double>::infinity();
        if (auto r = face.switch_point(inf, inf, rlo, rhi)) br.push_back(*r);
        std::erase_if(br, [&](double x) { return x <= rlo || x >= rhi; });
        std::sort(br.begin(), br.end());
        total += w * integrate(g, rlo, rhi, cfg, br).value;
      }
    }
    out.push_back(total);
  }
  return out;
}

/// Weak Div_{x,v} a for a = (b(x, v) dx, -Div_x B(., v)) against psi(x, v), one value per psi.
inline std::vector<double> phase_field_divergence(const FluxSpec& f, const std::vector<TestFunction>& psis) {
  const ParamField b = f.field();
  const PrimitiveField B = primitive(b);
  std::vector<double> out;
  for (const auto& psi : psis) {
    const Box sb = psi.support_box();
    QuadConfig cfg;
    cfg.abs_tol = 1e-12;
    std::vector<Component> curves = psi.breaks();
    for (const auto& c : b.singular_curves())
      curves.push_back(Component::segment({c.p0[0], sb.axis[1].lo - 1.0}, {c.p0[0], sb.axis[1].hi + 1.0}));
    const auto t1 = integrate_box(
        [&](const Point& p) { return b.eval(Point{p[0], 0.0}, p[1])[0] * psi.grad(p)[0]; }, sb, curves, cfg);
    QuadConfig vc;
    vc.abs_tol = 1e-12;
    auto inner = [&](double v) {
      QuadConfig ic;
      ic.abs_tol = 1e-13;
      return measure_integrate(B.divergence(v), [&](const Point& x) { return psi.grad(Point{x[0], v})[1]; }, ic);
    };
    std::vector<double> vbreaks;
    if (psi.kind == TestKind::Tensor) vbreaks = {psi.center[1] - psi.plateau[1], psi.center[1] + psi.plateau[1]};
    const auto t2 = integrate(inner, sb.axis[1].lo, sb.axis[1].hi, vc, vbreaks);
    if (!t1.converged || !t2.converged) throw Error(ErrorKind::Integration, "phase-space divergence quadrature did not converge");
    out.push_back(-t1.value + t2.value);
  }
  return out;
}

/// Interface functional, verbatim: both lines use <B+, nu>.
inline double interface_W(double u1p, double u1m, double u2p, double u2m, const std::function<double(double)>& Bplus_nu) {
  return Bplus_nu(u1p) * (-2.0 * chi(u1p, u2p) + 2.0 * chi(u1m, u2m)) +
         Bplus_nu(u2p) * (-2.0 * chi(u2p, u1p) + 2.0 * chi(u2m, u1m));
}

/// Same with <B-, nu> in the second line.
inline double interface_W_variant(double u1p, double u1m, double u2p, double u2m,
                                  const std::function<double(double)>& Bplus_nu,
                                  const std::function<double(double)>& Bminus_nu) {
  return Bplus_nu(u1p) * (-2.0 * chi(u1p, u2p) + 2.0 * chi(u1m, u2m)) +
         Bminus_nu(u2p) * (-2.0 * chi(u2p, u1p) + 2.0 * chi(u2m, u1m));
}

struct KatoRow {
  int cells = 0;
  double dx = 0.0;
  double l1_initial = 0.0, l1_final = 0.0;
  double kinetic_initial = 0.0, kinetic_final = 0.0;
  /// l1_final - l1_initial.
  double change = 0.0;
  /// |change - change at the reference resolution|.
  double deficit = 0.0;
  double w_integral = 0.0, w_integral_variant = 0.0;
  double w_max = -std::numeric_limits<double>::infinity();
  double w_max_variant = -std::numeric_limits<double>::infinity();
  double max_tv = 0.0;
};

struct KatoTable {
  std::vector<KatoRow> rows;
  double reference_change = 0.0;
  int reference_cells = 0;
};

namespace detail {

inline double l1_distance(const std::vector<double>& a, const std::vector<double>& b, double dx) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += std::abs(a[j] - b[j]) * dx;
  return s;
}

inline double kinetic_distance(const std::vector<double>& a, const std::vector<double>& b, double dx, double R) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += cavalieri_integral(a[j], b[j], R) * dx;
  return s;
}

inline double speed_bound(const FluxSpec& f, const std::vector<double>& ks) {
  double lam = 0.0;
  for (double kv : ks) lam = std::max({lam, std::abs(f.speed(kv, f.u_lo)), std::abs(f.speed(kv, f.u_hi))});
  return lam;
}

inline KatoRow kato_row(const FluxSpec& f, const BVFunction& a, const BVFunction& b, double T, int cells, double cfl) {
  KatoRow row;
  row.cells = cells;
  const auto ga = initial_state(f, a, cells), gb = initial_state(f, b, cells);
  row.dx = ga.dx;
  const Trajectory frame = make_trajectory_frame(f, ga);
  std::vector<double> ks = frame.k_cells;
  for (const auto& it : frame.interfaces) {
    ks.push_back(it.k_plus);
    ks.push_back(it.k_minus);
  }
  const double lam = speed_bound(f, ks);
  const auto ta = fv_solve(f, ga, T, cfl, lam), tb = fv_solve(f, gb, T, cfl, lam);
  const double R = f.M + 1.0;
  row.l1_initial = l1_distance(ta.states.front(), tb.states.front(), row.dx);
  row.l1_final = l1_distance(ta.states.back(), tb.states.back(), row.dx);
  row.kinetic_initial = kinetic_distance(ta.states.front(), tb.states.front(), row.dx, R);
  row.kinetic_final = kinetic_distance(ta.states.back(), tb.states.back(), row.dx, R);
  row.change = row.l1_final - row.l1_initial;
  row.max_tv = std::max(ta.max_tv, tb.max_tv);
  // the two runs use their own time steps; W is accumulated on the union of step times
  std::vector<double> ts = ta.times;
  ts.insert(ts.end(), tb.times.begin(), tb.times.end());
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const double t0 = ts[i], dt = ts[i + 1] - t0;
    if (dt <= 0.0) continue;
    while (ia + 1 < ta.times.size() - 1 && ta.times[ia + 1] <= t0) ++ia;
    while (ib + 1 < tb.times.size() - 1 && tb.times[ib + 1] <= t0) ++ib;
    for (std::size_t c = 0; c < ta.interfaces.size(); ++c) {
      const auto& it = ta.interfaces[c];
      const auto [al, ar] = ta.interface_states[ia][c];
      const auto [bl, br] = tb.interface_states[ib][c];
      // + is the side the normal points to
      const double u1p = it.nu > 0 ? ar : al, u1m = it.nu > 0 ? al : ar;
      const double u2p = it.nu > 0 ? br : bl, u2m = it.nu > 0 ? bl : br;
      auto Bp = [&](double t) { return it.nu * f.flux(it.k_plus, t); };
      auto Bm = [&](double t) { return it.nu * f.flux(it.k_minus, t); };
      const double w = interface_W(u1p, u1m, u2p, u2m, Bp);
      const double wv = interface_W_variant(u1p, u1m, u2p, u2m, Bp, Bm);
      row.w_integral += w * dt;
      row.w_integral_variant += wv * dt;
      row.w_max = std::max(row.w_max, w);
      row.w_max_variant = std::max(row.w_max_variant, wv);
    }
  }
  return row;
}

}  // namespace detail

/// L1 distance of two runs at each resolution, with the W functional accumulated at the interfaces.
inline KatoTable kato_check(const FluxSpec& f, const BVFunction& a, const BVFunction& b, double T,
                            const std::vector<int>& cells, double cfl = 0.45, int reference_cells = 0) {
  KatoTable tab;
  for (int n : cells) tab.rows.push_back(detail::kato_row(f, a, b, T, n, cfl));
  if (reference_cells > 0) {
    tab.reference_cells = reference_cells;
    tab.reference_change = detail::kato_row(f, a, b, T, reference_cells, cfl).change;
    for (auto& r : tab.rows) r.deficit = std::abs(r.change - tab.reference_change);
  }
  return tab;
}

}  // namespace divchain
