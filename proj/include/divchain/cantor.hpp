#pragma once

// Self-similar probability measures on an interval, generated by n affine
// contractions with a common ratio, and their integrals.

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "divchain/core.hpp"

namespace divchain {

/// IFS data for a self-similar measure on [a, b]. Map i sends [a, b] onto the
/// i-th of n equally spaced sub-intervals of length ratio*(b-a).
struct CantorSpec {
  double a = 0.0;
  double b = 1.0;
  double ratio = 1.0 / 3.0;
  std::vector<double> weights{0.5, 0.5};
  int max_depth = 22;

  static CantorSpec standard() { return CantorSpec{}; }

  int maps() const { return int(weights.size()); }
  double shift() const { return (b - a) * (1.0 - ratio) / double(maps() - 1); }
  double map(int i, double x) const { return a + ratio * (x - a) + i * shift(); }

  /// First moment of the measure.
  double barycenter() const {
    double s = 0.0;
    for (int i = 0; i < maps(); ++i) s += i * weights[std::size_t(i)];
    return a + shift() * s / (1.0 - ratio);
  }

  void validate() const {
    if (maps() < 2) throw Error(ErrorKind::Validation, "a Cantor construction needs at least two maps");
    if (!(b > a)) throw Error(ErrorKind::Validation, "Cantor base interval must be nonempty");
    if (!(ratio > 0.0) || ratio * maps() > 1.0 + 1e-14)
      throw Error(ErrorKind::Validation, "Cantor ratio must lie in (0, 1/n]");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw Error(ErrorKind::Validation, "Cantor weights must be positive");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorKind::Validation, "Cantor weights must sum to 1");
    if (max_depth < 1 || max_depth > 40) throw Error(ErrorKind::Validation, "Cantor depth out of range");
  }

  bool operator==(const CantorSpec& o) const {
    return a == o.a && b == o.b && ratio == o.ratio && weights == o.weights;
  }
};

/// Distribution function x -> mu([a, x]).
inline double cantor_cdf(const CantorSpec& c, double x) {
  double acc = 0.0, scale = 1.0;
  const double len = c.b - c.a;
  for (int it = 0; it < 200; ++it) {
    if (x <= c.a) return acc;
    if (x >= c.b) return acc + scale;
    const double s = c.shift();
    const double cell = c.ratio * len;
    const int n = c.maps();
    int i = std::min(n - 1, int(std::floor((x - c.a) / s)));
    const double left = c.a + i * s;
    double below = 0.0;
    for (int j = 0; j < i; ++j) below += c.weights[std::size_t(j)];
    if (x >= left + cell) return acc + scale * (below + c.weights[std::size_t(i)]);
    acc += scale * below;
    scale *= c.weights[std::size_t(i)];
    x = c.a + (x - left) / c.ratio;
    if (scale < 1e-300) return acc;
  }
  return acc;
}

/// Standard middle-thirds Cantor function, extended by 0 and 1.
inline double cantor_function(double x) {
  double acc = 0.0, w = 1.0;
  for (int it = 0; it < 64; ++it) {
    if (x <= 0.0) return acc;
    if (x >= 1.0) return acc + w;
    const double x3 = 3.0 * x;
    if (x3 < 1.0) {
      x = x3;
    } else if (x3 <= 2.0) {
      return acc + 0.5 * w;
    } else {
      acc += 0.5 * w;
      x = x3 - 2.0;
    }
    w *= 0.5;
  }
  return acc;
}

/// Endpoints of the construction cells at `depth`; the complement of their
/// union inside [a, b] is where the distribution function is flat.
inline void cantor_cells(const CantorSpec& c, int depth, std::vector<double>& out) {
  std::vector<double> lefts{c.a};
  double len = c.b - c.a;
  for (int d = 0; d < depth; ++d) {
    std::vector<double> next;
    next.reserve(lefts.size() * std::size_t(c.maps()));
    const double s = c.shift() * len / (c.b - c.a);
    for (double l : lefts)
      for (int i = 0; i < c.maps(); ++i) next.push_back(l + i * s);
    lefts.swap(next);
    len *= c.ratio;
  }
  for (double l : lefts) {
    out.push_back(l);
    out.push_back(l + len);
  }
}

struct CantorIntegral {
  double value = 0.0;
  int depth = 0;
  bool converged = false;
  long evaluations = 0;
};

namespace detail {

template <class F>
double cantor_level(const CantorSpec& c, F& f, int depth, double lo, double hi, long& evals) {
  const double m = c.barycenter();
  const double len0 = c.b - c.a;
  double total = 0.0;
  struct Frame {
    double left, len, w;
    int d;
  };
  std::vector<Frame> stack{{c.a, len0, 1.0, 0}};
  while (!stack.empty()) {
    const Frame fr = stack.back();
    stack.pop_back();
    const double right = fr.left + fr.len;
    if (right < lo || fr.left > hi) continue;
    const bool inside = fr.left >= lo && right <= hi;
    if (fr.d == depth || (inside && fr.d >= depth)) {
      const double xb = fr.left + (m - c.a) * fr.len / len0;
      if (xb >= lo && xb <= hi) {
        total += fr.w * f(xb);
        ++evals;
      }
      continue;
    }
    const double s = c.shift() * fr.len / len0;
    for (int i = c.maps() - 1; i >= 0; --i)
      stack.push_back(Frame{fr.left + i * s, fr.len * c.ratio, fr.w * c.weights[std::size_t(i)], fr.d + 1});
  }
  return total;
}

}  // namespace detail

/// Integral of f against the self-similar measure restricted to [lo, hi].
///
/// Each level replaces every depth-d cell by a point mass at its barycenter;
/// levels are refined until two successive values differ by less than
/// rel_tol*|value| (or abs_tol), or the depth/evaluation cap is reached.
template <class F>
CantorIntegral cantor_integrate(const CantorSpec& c, F&& f, double lo = -INFINITY, double hi = INFINITY,
                                double rel_tol = 1e-9, double abs_tol = 1e-14, long max_evals = 1L << 21) {
  CantorIntegral out;
  long evals = 0;
  double prev = detail::cantor_level(c, f, 2, lo, hi, evals);
  out.depth = 2;
  out.value = prev;
  for (int d = 3; d <= c.max_depth; ++d) {
    if (std::pow(double(c.maps()), d) > double(max_evals)) break;
    const double cur = detail::cantor_level(c, f, d, lo, hi, evals);
    out.value = cur;
    out.depth = d;
    if (std::abs(cur - prev) <= std::max(rel_tol * std::abs(cur), abs_tol)) {
      out.converged = true;
      break;
    }
    prev = cur;
  }
  out.evaluations = evals;
  return out;
}

/// Value at a fixed depth, without the stopping rule.
template <class F>
double cantor_integrate_at_depth(const CantorSpec& c, F&& f, int depth) {
  long evals = 0;
  return detail::cantor_level(c, f, depth, -INFINITY, INFINITY, evals);
}

}  // namespace divchain
