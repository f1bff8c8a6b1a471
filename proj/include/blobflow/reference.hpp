#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <utility>

#include "blobflow/error.hpp"
#include "blobflow/quadrature.hpp"
#include "blobflow/vec.hpp"

namespace blobflow::reference {

/// psi_1(tau, x) = (4 pi tau)^{-d/2} exp(-|x|^2 / (4 tau)); the heat flow from
/// psi_1(tau) reaches psi_1(tau + t) at time t.
template <int D>
double heat_kernel(double tau, const Vec<D>& x) {
  if (!(tau > 0.0)) throw ConfigError("tau", "time scale must be positive");
  return std::pow(4.0 * std::numbers::pi * tau, -0.5 * D) * std::exp(-norm2(x) / (4.0 * tau));
}

inline double barenblatt_beta(double m, int d) { return 1.0 / (2.0 + d * (m - 1.0)); }

inline double barenblatt_kappa(double m, int d) { return 0.5 * barenblatt_beta(m, d) * (m - 1.0) / m; }

namespace detail {

inline double unit_sphere_area(int d) { return d == 1 ? 2.0 : 2.0 * std::numbers::pi; }

/// Mass of x -> (K - kappa |x|^2)_+^{1/(m-1)} over R^d. The substitution
/// |x| = R sin(theta), R = sqrt(K / kappa), leaves a smooth integrand.
inline double barenblatt_mass(double K, double m, int d) {
  const double kappa = barenblatt_kappa(m, d);
  const double p = 1.0 / (m - 1.0);
  const double R = std::sqrt(K / kappa);
  auto f = [&](double th) {
    const double c = std::cos(th);
    return std::pow(K * c * c, p) * std::pow(R * std::sin(th), d - 1) * R * c;
  };
  return unit_sphere_area(d) * adaptive_simpson_split(f, 0.0, 0.5 * std::numbers::pi, 1e-15, 16);
}

}  // namespace detail

/// The constant K(m, d) giving the Barenblatt profile unit mass. Found by
/// bisection on the quadrature mass, which increases strictly with K.
/// Memoized per (m, d); safe to call concurrently.
inline double barenblatt_K(double m, int d) {
  if (!(m > 1.0)) throw ConfigError("m", "Barenblatt profiles need m > 1");
  if (d != 1 && d != 2) throw ConfigError("dimension", "dimension must be 1 or 2");
  static std::mutex mu;
  static std::map<std::pair<double, int>, double> memo;
  {
    std::lock_guard lock(mu);
    if (auto it = memo.find({m, d}); it != memo.end()) return it->second;
  }
  double lo = 1e-8, hi = 1.0;
  while (detail::barenblatt_mass(hi, m, d) < 1.0) hi *= 2.0;
  while (detail::barenblatt_mass(lo, m, d) > 1.0) lo *= 0.5;
  for (int it = 0; it < 200 && (hi - lo) > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (detail::barenblatt_mass(mid, m, d) < 1.0 ? lo : hi) = mid;
  }
  const double K = 0.5 * (lo + hi);
  std::lock_guard lock(mu);
  memo[{m, d}] = K;
  return K;
}

/// psi_m(tau, x) = tau^{-d beta} (K - kappa tau^{-2 beta} |x|^2)_+^{1/(m-1)}
template <int D>
double barenblatt(double m, double tau, const Vec<D>& x) {
  if (!(tau > 0.0)) throw ConfigError("tau", "time scale must be positive");
  const double beta = barenblatt_beta(m, D);
  const double kappa = barenblatt_kappa(m, D);
  const double K = barenblatt_K(m, D);
  const double inner = K - kappa * std::pow(tau, -2.0 * beta) * norm2(x);
  if (inner <= 0.0) return 0.0;
  return std::pow(tau, -D * beta) * std::pow(inner, 1.0 / (m - 1.0));
}

/// Radius of the support of psi_m(tau, .).
inline double barenblatt_support_radius(double m, double tau, int d) {
  return std::pow(tau, barenblatt_beta(m, d)) * std::sqrt(barenblatt_K(m, d) / barenblatt_kappa(m, d));
}

/// psi_m for every m >= 1 (heat kernel when m = 1).
template <int D>
double fundamental_solution(double m, double tau, const Vec<D>& x) {
  return m == 1.0 ? heat_kernel<D>(tau, x) : barenblatt<D>(m, tau, x);
}

/// Steady state of d_t rho = div(rho x) + Laplacian(rho^2) in 2-D: psi_2(0.25, .).
inline double fp_steady_state(const Vec<2>& x) { return barenblatt<2>(2.0, 0.25, x); }

/// Variant of the log interaction used in Keller-Segel runs.
enum class KellerSegelVariant {
  /// d = 2, W = (1/(2 pi)) log|x|, m = 1
  classical_2d,
  /// d = 1, W = 2 chi log|x|, m = 1
  log_1d,
};

/// Second-moment growth rate dM2/dt for Keller-Segel with linear diffusion.
/// Both follow from the virial computation d/dt int |x|^2 rho = 2 d M - 2 chi M^2,
/// using (x - y) . grad W(x - y) = 2 chi for W = 2 chi log|x|:
///   classical_2d (chi = 1/(4 pi)): 4 M (1 - M / (8 pi))
///   log_1d:                        2 M - 2 chi M^2
inline double ks_second_moment_slope(double total_mass, KellerSegelVariant variant, double chi = 0.0) {
  switch (variant) {
    case KellerSegelVariant::classical_2d:
      return 4.0 * total_mass * (1.0 - total_mass / (8.0 * std::numbers::pi));
    case KellerSegelVariant::log_1d:
      return 2.0 * total_mass - 2.0 * chi * total_mass * total_mass;
  }
  return 0.0;
}

/// || grad psi_m(tau, .)^m ||_{L^1}, the continuum counterpart of the nonlocal
/// Sobolev diagnostic, by radial quadrature.
inline double grad_power_l1(double m, double tau, int d) {
  const double omega = detail::unit_sphere_area(d);
  if (m == 1.0) {
    // |d/dr psi| = r / (2 tau) psi
    auto f = [&](double r) {
      const double psi = std::pow(4.0 * std::numbers::pi * tau, -0.5 * d) * std::exp(-r * r / (4.0 * tau));
      return r / (2.0 * tau) * psi * std::pow(r, d - 1);
    };
    const double rmax = std::sqrt(4.0 * tau * 60.0);
    return omega * adaptive_simpson_split(f, 0.0, rmax, 1e-13, 32);
  }
  // psi^m is radially decreasing, so the integral of |d/dr psi^m| r^{d-1}.
  const double R = barenblatt_support_radius(m, tau, d);
  if (d == 1) {
    const double peak = barenblatt<1>(m, tau, Vec<1>{{0.0}});
    return 2.0 * std::pow(peak, m);
  }
  const double beta = barenblatt_beta(m, d);
  const double kappa = barenblatt_kappa(m, d);
  const double K = barenblatt_K(m, d);
  const double a = kappa * std::pow(tau, -2.0 * beta);
  const double q = m / (m - 1.0);
  // psi^m = tau^{-d beta m} (K - a r^2)^q,  d/dr = -2 a r q (K - a r^2)^{q-1} tau^{-d beta m}
  auto f = [&](double r) {
    const double inner = std::max(K - a * r * r, 0.0);
    return std::pow(tau, -d * beta * m) * 2.0 * a * r * q * std::pow(inner, q - 1.0) * std::pow(r, d - 1);
  };
  return omega * adaptive_simpson_split(f, 0.0, R, 1e-13, 32);
}

}  // namespace blobflow::reference
