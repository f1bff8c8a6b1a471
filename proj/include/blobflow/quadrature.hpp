#pragma once

#include <cmath>
#include <functional>

namespace blobflow {

namespace detail {

template <typename F>
double simpson_recursive(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                         double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_recursive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_recursive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance tol.
template <typename F>
double adaptive_simpson(const F& f, double a, double b, double tol, int max_depth = 50) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_recursive(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Same as adaptive_simpson but the interval is first split into `pieces`
/// equal parts, which guards against integrands the initial 5-point sample
/// mistakes for zero.
template <typename F>
double adaptive_simpson_split(const F& f, double a, double b, double tol, int pieces, int max_depth = 50) {
  double s = 0.0;
  const double w = (b - a) / pieces;
  for (int k = 0; k < pieces; ++k) s += adaptive_simpson(f, a + k * w, a + (k + 1) * w, tol / pieces, max_depth);
  return s;
}

}  // namespace blobflow
