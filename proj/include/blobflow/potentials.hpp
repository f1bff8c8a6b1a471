#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "blobflow/error.hpp"
#include "blobflow/vec.hpp"

namespace blobflow {

/// Ein(u) = sum_{k>=1} (-1)^{k+1} u^k / (k k!) = E1(u) + log(u) + gamma, entire in u.
inline double ein(double u) {
  if (u <= 2.0) {
    double term = u;
    double sum = u;
    for (int k = 2; k < 60; ++k) {
      term *= -u / k;
      const double add = term / k;
      sum += add;
      if (std::abs(add) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  const double e1 = -std::expint(-u);
  return e1 + std::log(u) + std::numbers::egamma;
}

/// External (confining) potential V.
struct DriftPotential {
  enum class Kind { none, quadratic };
  Kind kind = Kind::none;

  static DriftPotential none() { return {Kind::none}; }
  /// V(x) = |x|^2 / 2
  static DriftPotential quadratic() { return {Kind::quadratic}; }

  template <int D>
  double value(const Vec<D>& x) const noexcept {
    return kind == Kind::quadratic ? 0.5 * norm2(x) : 0.0;
  }

  template <int D>
  Vec<D> grad(const Vec<D>& x) const noexcept {
    return kind == Kind::quadratic ? x : Vec<D>{};
  }

  bool is_none() const noexcept { return kind == Kind::none; }
};

/// Interaction potential W, with the log kernel W = 2 chi log|x| in its two
/// regularized forms.
///
/// log1d: grad W_reg(x) = 2 chi sign(x) / max(|x|, eps). The value is the odd
///   gradient's antiderivative: 2 chi log|x| outside the cutoff and the linear
///   ramp 2 chi (log eps + |x|/eps - 1) inside it.
/// log2d: W_reg = W * phi_eps with phi_eps the Gaussian of variance 4 eps^2 per
///   axis. With u = |x|^2 / (8 eps^2):
///     grad W_reg(x) = 2 chi x / |x|^2 (1 - e^{-u})
///     W_reg(x)      = chi (log(8 eps^2) + Ein(u) - gamma)
template <int D>
struct InteractionPotential {
  enum class Kind { none, log1d, log2d };
  Kind kind = Kind::none;
  double chi = 0.0;
  double epsilon = 1.0;

  static InteractionPotential none() { return {}; }

  static InteractionPotential log1d(double chi, double epsilon) {
    static_assert(D == 1, "log1d interaction is one-dimensional");
    check(epsilon);
    return {Kind::log1d, chi, epsilon};
  }

  static InteractionPotential log2d(double chi, double epsilon) {
    static_assert(D == 2, "log2d interaction is two-dimensional");
    check(epsilon);
    return {Kind::log2d, chi, epsilon};
  }

  bool is_none() const noexcept { return kind == Kind::none; }

  Vec<D> grad(const Vec<D>& x) const noexcept {
    switch (kind) {
      case Kind::none:
        return {};
      case Kind::log1d: {
        const double a = std::abs(x[0]);
        if (a == 0.0) return {};
        const double s = x[0] > 0.0 ? 1.0 : -1.0;
        return Vec<D>{{2.0 * chi * s / std::max(a, epsilon)}};
      }
      case Kind::log2d: {
        const double r2 = norm2(x);
        if (r2 == 0.0) return {};
        const double inv8e2 = 1.0 / (8.0 * epsilon * epsilon);
        return x * log2d_factor(r2, inv8e2, std::exp(-r2 * inv8e2));
      }
    }
    return {};
  }

  /// Scalar s with grad W_reg(x) = x * s for log2d, given r2 = |x|^2 > 0 and
  /// e = exp(-r2 * inv8e2).
  double log2d_factor(double r2, double inv8e2, double e) const noexcept {
    const double u = r2 * inv8e2;
    const double one_minus = u < 1e-2 ? -std::expm1(-u) : 1.0 - e;
    return 2.0 * chi * one_minus / r2;
  }

  double value(const Vec<D>& x) const noexcept {
    switch (kind) {
      case Kind::none:
        return 0.0;
      case Kind::log1d: {
        const double a = std::abs(x[0]);
        if (a >= epsilon) return 2.0 * chi * std::log(a);
        return 2.0 * chi * (std::log(epsilon) + a / epsilon - 1.0);
      }
      case Kind::log2d: {
        const double e2 = 8.0 * epsilon * epsilon;
        const double u = norm2(x) / e2;
        return chi * (std::log(e2) + ein(u) - std::numbers::egamma);
      }
    }
    return 0.0;
  }

 private:
  static void check(double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("interaction.epsilon", "cutoff must be positive");
  }
};

template <int D>
std::string to_string(const InteractionPotential<D>& w) {
  using K = typename InteractionPotential<D>::Kind;
  switch (w.kind) {
    case K::none:
      return "none";
    case K::log1d:
      return "log1d";
    case K::log2d:
      return "log2d";
  }
  return "none";
}

inline std::string to_string(const DriftPotential& v) {
  return v.kind == DriftPotential::Kind::quadratic ? "quadratic" : "none";
}

}  // namespace blobflow
