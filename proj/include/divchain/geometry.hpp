#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "divchain/core.hpp"

namespace divchain {

enum class Shape { Point, Segment, Arc };

/// One connected piece of a rectifiable set: a point (1D) or a C^1 curve (2D).
///
/// Curves are parametrized by arc length s in [0, length()]. The unit normal of
/// a segment is the tangent rotated clockwise; the normal of an arc is the
/// outward radial direction. `orientation` (+1/-1) multiplies either choice.
struct Component {
  Shape shape = Shape::Point;
  Point p0{}, p1{};
  Point center{};
  double radius = 0.0, theta0 = 0.0, theta1 = 0.0;
  int orientation = 1;

  static Component point(double x, int normal = 1) {
    Component c;
    c.shape = Shape::Point;
    c.p0 = {x, 0.0};
    c.orientation = normal >= 0 ? 1 : -1;
    return c;
  }
  static Component segment(Point a, Point b, int orientation = 1) {
    if (std::hypot(b[0] - a[0], b[1] - a[1]) <= 0.0) throw Error(ErrorKind::Geometry, "degenerate segment");
    Component c;
    c.shape = Shape::Segment;
    c.p0 = a;
    c.p1 = b;
    c.orientation = orientation >= 0 ? 1 : -1;
    return c;
  }
  static Component arc(Point center, double r, double th0, double th1, int orientation = 1) {
    if (!(r > 0.0) || !(th1 > th0) || th1 - th0 > 2.0 * std::numbers::pi + 1e-12)
      throw Error(ErrorKind::Geometry, "arc needs r > 0 and 0 < theta1 - theta0 <= 2 pi");
    Component c;
    c.shape = Shape::Arc;
    c.center = center;
    c.radius = r;
    c.theta0 = th0;
    c.theta1 = th1;
    c.orientation = orientation >= 0 ? 1 : -1;
    return c;
  }
  static Component circle(Point center, double r, int orientation = 1) {
    return arc(center, r, 0.0, 2.0 * std::numbers::pi, orientation);
  }

  bool closed() const { return shape == Shape::Arc && theta1 - theta0 >= 2.0 * std::numbers::pi - 1e-12; }

  double length() const {
    switch (shape) {
      case Shape::Point: return 0.0;
      case Shape::Segment: return std::hypot(p1[0] - p0[0], p1[1] - p0[1]);
      case Shape::Arc: return radius * (theta1 - theta0);
    }
    return 0.0;
  }

  Point at(double s) const {
    switch (shape) {
      case Shape::Point: return p0;
      case Shape::Segment: {
        const double l = length();
        return {p0[0] + (p1[0] - p0[0]) * s / l, p0[1] + (p1[1] - p0[1]) * s / l};
      }
      case Shape::Arc: {
        const double th = theta0 + s / radius;
        return {center[0] + radius * std::cos(th), center[1] + radius * std::sin(th)};
      }
    }
    return p0;
  }

  Vec normal_at(double s) const {
    switch (shape) {
      case Shape::Point: return {double(orientation), 0.0};
      case Shape::Segment: {
        const double l = length();
        const double tx = (p1[0] - p0[0]) / l, ty = (p1[1] - p0[1]) / l;
        return {orientation * ty, -orientation * tx};
      }
      case Shape::Arc: {
        const double th = theta0 + s / radius;
        return {orientation * std::cos(th), orientation * std::sin(th)};
      }
    }
    return {1.0, 0.0};
  }

  /// Arc-length parameter of the closest point on the component.
  double param_of(const Point& x) const {
    switch (shape) {
      case Shape::Point: return 0.0;
      case Shape::Segment: {
        const double l = length();
        const double tx = (p1[0] - p0[0]) / l, ty = (p1[1] - p0[1]) / l;
        return std::clamp((x[0] - p0[0]) * tx + (x[1] - p0[1]) * ty, 0.0, l);
      }
      case Shape::Arc: {
        double th = std::atan2(x[1] - center[1], x[0] - center[0]);
        const double two_pi = 2.0 * std::numbers::pi;
        while (th < theta0) th += two_pi;
        while (th >= theta0 + two_pi) th -= two_pi;
        if (th > theta1) {
          // outside the arc: snap to the nearer end
          const double d1 = th - theta1, d0 = theta0 + two_pi - th;
          th = d1 < d0 ? theta1 : theta0;
        }
        return radius * (th - theta0);
      }
    }
    return 0.0;
  }

  double distance(const Point& x, int dim) const {
    if (shape == Shape::Point) return dim == 1 ? std::abs(x[0] - p0[0]) : std::hypot(x[0] - p0[0], x[1] - p0[1]);
    const Point q = at(param_of(x));
    return std::hypot(x[0] - q[0], x[1] - q[1]);
  }

  bool same_geometry(const Component& o, double tol = 1e-12) const {
    if (shape != o.shape) return false;
    auto close = [tol](double a, double b) { return std::abs(a - b) <= tol * (1.0 + std::abs(a)); };
    switch (shape) {
      case Shape::Point: return close(p0[0], o.p0[0]);
      case Shape::Segment:
        return (close(p0[0], o.p0[0]) && close(p0[1], o.p0[1]) && close(p1[0], o.p1[0]) && close(p1[1], o.p1[1])) ||
               (close(p0[0], o.p1[0]) && close(p0[1], o.p1[1]) && close(p1[0], o.p0[0]) && close(p1[1], o.p0[1]));
      case Shape::Arc:
        return close(center[0], o.center[0]) && close(center[1], o.center[1]) && close(radius, o.radius) &&
               close(theta0, o.theta0) && close(theta1, o.theta1);
    }
    return false;
  }

  /// Normal at the closest point of `o`'s parametrization agrees with ours (same geometry assumed).
  bool same_orientation(const Component& o) const {
    const double s = 0.5 * length();
    const Point x = at(s);
    const Vec a = normal_at(s), b = o.normal_at(o.param_of(x));
    return a[0] * b[0] + a[1] * b[1] > 0.0;
  }

  Component flipped() const {
    Component c = *this;
    c.orientation = -orientation;
    return c;
  }

  /// y-coordinates where the vertical line {x = xv} meets the component (2D curves only).
  void vertical_intersections(double xv, std::vector<double>& ys) const {
    if (shape == Shape::Segment) {
      const double dx = p1[0] - p0[0];
      if (dx == 0.0) return;
      const double lam = (xv - p0[0]) / dx;
      if (lam < 0.0 || lam > 1.0) return;
      ys.push_back(p0[1] + lam * (p1[1] - p0[1]));
    } else if (shape == Shape::Arc) {
      const double d = xv - center[0];
      if (std::abs(d) > radius) return;
      const double h = std::sqrt(std::max(0.0, radius * radius - d * d));
      for (double y : {center[1] - h, center[1] + h}) {
        if (on_arc_angle(std::atan2(y - center[1], d))) ys.push_back(y);
      }
    }
  }

  /// x-coordinates where the vertical-line intersection pattern can change.
  void x_critical(std::vector<double>& xs) const {
    if (shape == Shape::Segment) {
      xs.push_back(p0[0]);
      xs.push_back(p1[0]);
    } else if (shape == Shape::Arc) {
      if (!closed()) {
        xs.push_back(at(0.0)[0]);
        xs.push_back(at(length())[0]);
      }
      if (on_arc_angle(0.0)) xs.push_back(center[0] + radius);
      if (on_arc_angle(std::numbers::pi)) xs.push_back(center[0] - radius);
    }
  }

  bool on_arc_angle(double th) const {
    const double two_pi = 2.0 * std::numbers::pi;
    while (th < theta0) th += two_pi;
    while (th >= theta0 + two_pi) th -= two_pi;
    return th <= theta1 + 1e-14;
  }
};

/// Points where two curve components meet (2D).
inline std::vector<Point> intersections(const Component& a, const Component& b) {
  std::vector<Point> out;
  if (a.shape == Shape::Point || b.shape == Shape::Point) return out;
  if (a.shape == Shape::Segment && b.shape == Shape::Segment) {
    const double rx = a.p1[0] - a.p0[0], ry = a.p1[1] - a.p0[1];
    const double sx = b.p1[0] - b.p0[0], sy = b.p1[1] - b.p0[1];
    const double den = rx * sy - ry * sx;
    if (std::abs(den) < 1e-300) return out;
    const double qx = b.p0[0] - a.p0[0], qy = b.p0[1] - a.p0[1];
    const double t = (qx * sy - qy * sx) / den, u = (qx * ry - qy * rx) / den;
    if (t >= 0 && t <= 1 && u >= 0 && u <= 1) out.push_back({a.p0[0] + t * rx, a.p0[1] + t * ry});
    return out;
  }
  if (a.shape == Shape::Arc && b.shape == Shape::Segment) return intersections(b, a);
  if (a.shape == Shape::Segment && b.shape == Shape::Arc) {
    const double dx = a.p1[0] - a.p0[0], dy = a.p1[1] - a.p0[1];
    const double fx = a.p0[0] - b.center[0], fy = a.p0[1] - b.center[1];
    const double A = dx * dx + dy * dy, B = 2 * (fx * dx + fy * dy), C = fx * fx + fy * fy - b.radius * b.radius;
    const double disc = B * B - 4 * A * C;
    if (disc < 0) return out;
    const double sq = std::sqrt(disc);
    for (double t : {(-B - sq) / (2 * A), (-B + sq) / (2 * A)}) {
      if (t < 0 || t > 1) continue;
      const Point p{a.p0[0] + t * dx, a.p0[1] + t * dy};
      if (b.on_arc_angle(std::atan2(p[1] - b.center[1], p[0] - b.center[0]))) out.push_back(p);
    }
    if (disc == 0 && out.size() == 2) out.pop_back();
    return out;
  }
  // arc-arc
  const double dx = b.center[0] - a.center[0], dy = b.center[1] - a.center[1];
  const double d = std::hypot(dx, dy);
  if (d == 0.0 || d > a.radius + b.radius || d < std::abs(a.radius - b.radius)) return out;
  const double l = (a.radius * a.radius - b.radius * b.radius + d * d) / (2 * d);
  const double h = std::sqrt(std::max(0.0, a.radius * a.radius - l * l));
  const double mx = a.center[0] + l * dx / d, my = a.center[1] + l * dy / d;
  for (double sgn_h : {-1.0, 1.0}) {
    const Point p{mx + sgn_h * h * (-dy) / d, my + sgn_h * h * dx / d};
    if (a.on_arc_angle(std::atan2(p[1] - a.center[1], p[0] - a.center[0])) &&
        b.on_arc_angle(std::atan2(p[1] - b.center[1], p[0] - b.center[0])))
      out.push_back(p);
    if (h == 0.0) break;
  }
  return out;
}

/// All pairwise meeting points of a list of curves.
inline std::vector<Point> curve_crossings(const std::vector<Component>& curves) {
  std::vector<Point> out;
  for (std::size_t i = 0; i < curves.size(); ++i)
    for (std::size_t j = i + 1; j < curves.size(); ++j)
      for (const auto& p : intersections(curves[i], curves[j])) out.push_back(p);
  return out;
}

/// A sample of a rectifiable set: location, unit normal, owning component and arc parameter.
struct SetPoint {
  Point x{};
  Vec normal{1.0, 0.0};
  int component = 0;
  double s = 0.0;
};

/// Finite union of points (N = 1) or C^1 curves (N = 2) with a normal field.
struct RectifiableSet {
  int dim = 1;
  std::vector<Component> comps;

  bool empty() const { return comps.empty(); }

  /// H^{N-1} mass: point count in 1D, total length in 2D.
  double measure() const {
    double m = 0.0;
    for (const auto& c : comps) m += dim == 1 ? 1.0 : c.length();
    return m;
  }

  SetPoint sample(int comp, double s) const {
    const auto& c = comps.at(static_cast<std::size_t>(comp));
    return SetPoint{c.at(s), c.normal_at(s), comp, s};
  }

  std::optional<SetPoint> locate(const Point& x, double tol = 1e-12) const {
    for (std::size_t i = 0; i < comps.size(); ++i) {
      if (comps[i].distance(x, dim) <= tol) {
        const double s = comps[i].param_of(x);
        return SetPoint{dim == 1 ? Point{comps[i].p0[0], 0.0} : comps[i].at(s), comps[i].normal_at(s), int(i), s};
      }
    }
    return std::nullopt;
  }

  double distance(const Point& x) const {
    double d = INFINITY;
    for (const auto& c : comps) d = std::min(d, c.distance(x, dim));
    return d;
  }

  RectifiableSet flipped() const {
    RectifiableSet r = *this;
    for (auto& c : r.comps) c = c.flipped();
    return r;
  }

  bool inside(const Box& b) const {
    for (const auto& c : comps) {
      if (c.shape == Shape::Point) {
        if (!b.axis[0].contains(c.p0[0])) return false;
        continue;
      }
      const int n = 64;
      for (int k = 0; k <= n; ++k)
        if (!b.contains(c.at(c.length() * k / n), 1e-12)) return false;
    }
    return true;
  }
};

/// Same components in the same order with the same geometry (orientation ignored).
inline bool same_support(const RectifiableSet& a, const RectifiableSet& b) {
  if (a.dim != b.dim || a.comps.size() != b.comps.size()) return false;
  for (std::size_t i = 0; i < a.comps.size(); ++i)
    if (!a.comps[i].same_geometry(b.comps[i])) return false;
  return true;
}

}  // namespace divchain
