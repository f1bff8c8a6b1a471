#pragma once

#include <cmath>
#include <numbers>

#include "blobflow/error.hpp"
#include "blobflow/vec.hpp"

namespace blobflow {

/// Gaussian mollifier pair at bandwidth epsilon:
///
///   zeta_eps(x) = (4 pi eps^2)^{-d/2} exp(-|x|^2 / (4 eps^2))
///   phi_eps(x)  = (zeta_eps * zeta_eps)(x) = (8 pi eps^2)^{-d/2} exp(-|x|^2 / (8 eps^2))
///
/// Only Gaussians are supported; closed-form gradients depend on it.
///
/// Kernel values are returned as exact 0 once the exponent exceeds
/// kUnderflowExponent, i.e. |x|^2 > 400 * 4 eps^2 for zeta and
/// |x|^2 > 400 * 8 eps^2 for phi. Callers raising phi * mu to a negative
/// power must keep the self term in the sum.
template <int D>
class Mollifier {
 public:
  static constexpr double kUnderflowExponent = 400.0;

  explicit Mollifier(double epsilon) : epsilon_(epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw ConfigError("epsilon", "mollifier bandwidth must be positive and finite");
    const double e2 = epsilon * epsilon;
    inv4e2_ = 1.0 / (4.0 * e2);
    inv8e2_ = 1.0 / (8.0 * e2);
    inv2e2_ = 1.0 / (2.0 * e2);
    zeta_norm_ = std::pow(4.0 * std::numbers::pi * e2, -0.5 * D);
    phi_norm_ = std::pow(8.0 * std::numbers::pi * e2, -0.5 * D);
  }

  double epsilon() const noexcept { return epsilon_; }
  static constexpr int dimension() noexcept { return D; }

  double zeta_from_r2(double r2) const noexcept {
    const double a = r2 * inv4e2_;
    return a > kUnderflowExponent ? 0.0 : zeta_norm_ * std::exp(-a);
  }

  double phi_from_r2(double r2) const noexcept {
    const double a = r2 * inv8e2_;
    return a > kUnderflowExponent ? 0.0 : phi_norm_ * std::exp(-a);
  }

  double zeta(const Vec<D>& x) const noexcept { return zeta_from_r2(norm2(x)); }
  double phi(const Vec<D>& x) const noexcept { return phi_from_r2(norm2(x)); }

  /// grad zeta_eps(x) = -x / (2 eps^2) * zeta_eps(x)
  Vec<D> zeta_grad(const Vec<D>& x) const noexcept {
    return x * (-inv2e2_ * zeta_from_r2(norm2(x)));
  }

  /// grad phi_eps(x) = -x / (4 eps^2) * phi_eps(x)
  Vec<D> phi_grad(const Vec<D>& x) const noexcept { return x * phi_grad_factor(norm2(x)); }

  /// Scalar s with grad phi_eps(x) = x * s, given r2 = |x|^2.
  double phi_grad_factor(double r2) const noexcept { return -inv4e2_ * phi_from_r2(r2); }

  /// Same as phi_grad_factor but from an already evaluated phi value.
  double phi_grad_factor_from_value(double phi_value) const noexcept { return -inv4e2_ * phi_value; }

  double zeta_at_zero() const noexcept { return zeta_norm_; }
  double phi_at_zero() const noexcept { return phi_norm_; }
  double inv8e2() const noexcept { return inv8e2_; }

 private:
  double epsilon_;
  double inv2e2_ = 0, inv4e2_ = 0, inv8e2_ = 0;
  double zeta_norm_ = 0, phi_norm_ = 0;
};

/// The bandwidth rule eps = h^{1-p} used throughout the convergence studies.
inline double epsilon_from_spacing(double h, double p = 0.01) {
  if (!(h > 0.0)) throw ConfigError("grid.h", "grid spacing must be positive");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("epsilon_p", "exponent p must lie in (0, 1)");
  return std::pow(h, 1.0 - p);
}

}  // namespace blobflow
