#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace divchain {

/// A point (or vector) in R^N for N in {1, 2}. In 1D only the first slot is used.
using Point = std::array<double, 2>;
using Vec = std::array<double, 2>;

inline double dot(const Vec& a, const Vec& b, int dim) {
  return dim == 1 ? a[0] * b[0] : a[0] * b[0] + a[1] * b[1];
}

inline Point operator+(const Point& a, const Point& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Point operator-(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Point operator*(double s, const Point& a) { return {s * a[0], s * a[1]}; }

inline double norm(const Vec& a) { return std::hypot(a[0], a[1]); }

enum class ErrorKind {
  DomainMismatch,
  UnsupportedStructure,
  AbsoluteContinuity,
  NotOnJumpSet,
  DegenerateLevel,
  Integration,
  Orientation,
  WrongRegularity,
  Boundary,
  Geometry,
  Parse,
  Validation,
  Solver,
  KineticViolation,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DomainMismatch: return "domain-mismatch";
    case ErrorKind::UnsupportedStructure: return "unsupported-structure";
    case ErrorKind::AbsoluteContinuity: return "absolute-continuity";
    case ErrorKind::NotOnJumpSet: return "not-on-jump-set";
    case ErrorKind::DegenerateLevel: return "degenerate-level";
    case ErrorKind::Integration: return "integration";
    case ErrorKind::Orientation: return "orientation";
    case ErrorKind::WrongRegularity: return "wrong-regularity";
    case ErrorKind::Boundary: return "boundary";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Solver: return "solver";
    case ErrorKind::KineticViolation: return "kinetic-violation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Closed interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double x, double slack = 0.0) const { return x >= lo - slack && x <= hi + slack; }
};

/// Axis-aligned box; in 1D only axis[0] is meaningful.
struct Box {
  int dim = 1;
  std::array<Interval, 2> axis{};

  bool contains(const Point& p, double slack = 0.0) const {
    for (int i = 0; i < dim; ++i)
      if (!axis[i].contains(p[i], slack)) return false;
    return true;
  }
  bool contains(const Box& b, double slack = 1e-12) const {
    for (int i = 0; i < dim; ++i)
      if (b.axis[i].lo < axis[i].lo - slack || b.axis[i].hi > axis[i].hi + slack) return false;
    return true;
  }
  double volume() const {
    double v = axis[0].length();
    if (dim == 2) v *= axis[1].length();
    return v;
  }
  double diameter() const {
    return dim == 1 ? axis[0].length() : std::hypot(axis[0].length(), axis[1].length());
  }
};

/// The computational domain: a closed box with finite endpoints.
struct Domain {
  Box box;

  Domain() = default;
  explicit Domain(Box b) : box(b) {
    if (b.dim != 1 && b.dim != 2) throw Error(ErrorKind::Validation, "domain dimension must be 1 or 2");
    for (int i = 0; i < b.dim; ++i) {
      if (!std::isfinite(b.axis[i].lo) || !std::isfinite(b.axis[i].hi) || !(b.axis[i].lo < b.axis[i].hi))
        throw Error(ErrorKind::Validation, "domain interval must be nonempty and finite");
    }
  }
  static Domain interval(double a, double b) { return Domain(Box{1, {Interval{a, b}, Interval{}}}); }
  static Domain rect(double x0, double x1, double y0, double y1) {
    return Domain(Box{2, {Interval{x0, x1}, Interval{y0, y1}}});
  }
  int dim() const { return box.dim; }
  double scale() const { return box.diameter(); }
};

inline bool same_domain(const Domain& a, const Domain& b) {
  if (a.dim() != b.dim()) return false;
  for (int i = 0; i < a.dim(); ++i)
    if (a.box.axis[i].lo != b.box.axis[i].lo || a.box.axis[i].hi != b.box.axis[i].hi) return false;
  return true;
}

inline double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace divchain
