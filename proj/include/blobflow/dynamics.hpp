#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "blobflow/ensemble.hpp"
#include "blobflow/error.hpp"
#include "blobflow/mollifier.hpp"
#include "blobflow/parallel.hpp"
#include "blobflow/potentials.hpp"
#include "blobflow/vec.hpp"

namespace blobflow {

/// Diffusion exponent m, drift V, interaction W and mollifier for
///   d_t rho = div(rho grad V) + div(rho grad W * rho) + Laplacian(rho^m).
template <int D>
struct ProblemSpec {
  double m = 1.0;
  DriftPotential drift = DriftPotential::none();
  InteractionPotential<D> interaction = InteractionPotential<D>::none();
  Mollifier<D> mollifier{1.0};

  void validate() const {
    if (!(m >= 1.0) || !std::isfinite(m)) throw ConfigError("m", "diffusion exponent must satisfy m >= 1");
  }
};

/// Selects which parts of the velocity field are assembled. Used by tests to
/// isolate a single term.
struct VelocityTerms {
  bool drift = true;
  bool interaction = true;
  bool diffusion = true;
};

/// F_m'(s) = s^{m-2}; for m = 1 this is 1/s.
inline double internal_weight(double s, double m) {
  if (m == 2.0) return 1.0;
  if (m == 1.0) return 1.0 / s;
  if (m == 3.0) return s;
  return std::pow(s, m - 2.0);
}

/// F_m(s) = log s for m = 1 and s^{m-1}/(m-1) otherwise.
inline double internal_density(double s, double m) {
  if (m == 1.0) return std::log(s);
  return std::pow(s, m - 1.0) / (m - 1.0);
}

namespace detail {

/// Largest ensemble for which the N x N table of phi values is kept in memory.
inline constexpr std::size_t kKernelCacheLimit = 4096;

/// phi_eps(X_i - X_j) for all pairs. Each unordered pair is evaluated once and
/// mirrored, so every entry equals Mollifier::phi_from_r2 bit for bit.
template <int D>
std::vector<double> phi_table(const ParticleEnsemble<D>& e, const Mollifier<D>& moll) {
  const std::size_t n = e.size();
  std::vector<double> k(n * n);
  const auto& x = e.positions();
  parallel_for(n, [&](std::size_t b, std::size_t end) {
    for (std::size_t i = b; i < end; ++i) {
      k[i * n + i] = moll.phi_at_zero();
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = moll.phi_from_r2(norm2(x[i] - x[j]));
        k[i * n + j] = v;
        k[j * n + i] = v;
      }
    }
  }, worker_count(), 8);
  return k;
}

template <int D>
struct Evaluation {
  std::vector<double> conv;
  std::vector<Vec<D>> velocity;
};

/// Contribution of particle j to the velocity of particle i, given the phi
/// value of their separation.
template <int D>
struct PairTerm {
  const ProblemSpec<D>& p;
  const VelocityTerms& terms;
  bool reuse_exp;  // interaction cutoff equals the mollifier bandwidth

  Vec<D> operator()(const Vec<D>& d, double phi_ij, double wi, double wj, double mj) const {
    Vec<D> acc{};
    if (terms.diffusion) {
      const Vec<D> g = d * p.mollifier.phi_grad_factor_from_value(phi_ij);
      acc += g * ((wi + wj) * mj);
    }
    if (terms.interaction && !p.interaction.is_none()) {
      using K = typename InteractionPotential<D>::Kind;
      if (p.interaction.kind == K::log2d && reuse_exp) {
        const double r2 = norm2(d);
        if (r2 > 0.0) {
          const double e = phi_ij / p.mollifier.phi_at_zero();
          acc += d * (p.interaction.log2d_factor(r2, p.mollifier.inv8e2(), e) * mj);
        }
      } else {
        acc += p.interaction.grad(d) * mj;
      }
    }
    return acc;
  }
};

template <int D>
void finish_velocity(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p, const VelocityTerms& terms,
                     std::vector<Vec<D>>& pair_acc) {
  for (std::size_t i = 0; i < e.size(); ++i) {
    Vec<D> v{};
    if (terms.drift && !p.drift.is_none()) v -= p.drift.grad(e.position(i));
    v -= pair_acc[i];
    if (!all_finite(v))
      throw NumericalError("non-finite velocity at particle " + std::to_string(i));
    pair_acc[i] = v;
  }
}

template <int D>
std::vector<double> conv_streaming(const ParticleEnsemble<D>& e, const Mollifier<D>& moll) {
  const std::size_t n = e.size();
  const auto& x = e.positions();
  const auto& m = e.masses();
  std::vector<double> conv(n, 0.0);
  const unsigned workers = worker_count();
  if (workers <= 1) {
    // Each unordered pair once; every conv[i] still accumulates in increasing j.
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j < i) continue;
        const double v = j == i ? moll.phi_at_zero() : moll.phi_from_r2(norm2(x[i] - x[j]));
        conv[i] += v * m[j];
        if (j != i) conv[j] += v * m[i];
      }
    }
    return conv;
  }
  parallel_for(n, [&](std::size_t b, std::size_t end) {
    for (std::size_t i = b; i < end; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = j == i ? moll.phi_at_zero() : moll.phi_from_r2(norm2(x[i] - x[j]));
        s += v * m[j];
      }
      conv[i] = s;
    }
  }, workers, 8);
  return conv;
}

/// Pairwise sums with a fixed per-particle order (increasing j), so the result
/// does not depend on the worker count or on whether the phi table is cached.
template <int D>
Evaluation<D> evaluate(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p, const VelocityTerms& terms) {
  p.validate();
  const std::size_t n = e.size();
  const auto& x = e.positions();
  const auto& mass = e.masses();
  const auto& moll = p.mollifier;
  const bool reuse_exp = p.interaction.epsilon == moll.epsilon();
  const PairTerm<D> term{p, terms, reuse_exp};

  Evaluation<D> out;
  std::vector<Vec<D>> acc(n);
  const unsigned workers = worker_count();

  if (n <= kKernelCacheLimit) {
    const std::vector<double> k = phi_table(e, moll);
    out.conv.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      const double* row = &k[i * n];
      for (std::size_t j = 0; j < n; ++j) s += row[j] * mass[j];
      out.conv[i] = s;
    }
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = internal_weight(out.conv[i], p.m);
    parallel_for(n, [&](std::size_t b, std::size_t end) {
      for (std::size_t i = b; i < end; ++i) {
        Vec<D> a{};
        const double* row = &k[i * n];
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          a += term(x[i] - x[j], row[j], w[i], w[j], mass[j]);
        }
        acc[i] = a;
      }
    }, workers, 8);
  } else {
    out.conv = conv_streaming(e, moll);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = internal_weight(out.conv[i], p.m);
    if (workers <= 1) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          const Vec<D> dij = x[i] - x[j];
          const Vec<D> dji = x[j] - x[i];
          const double v = moll.phi_from_r2(norm2(dij));
          acc[i] += term(dij, v, w[i], w[j], mass[j]);
          acc[j] += term(dji, v, w[j], w[i], mass[i]);
        }
      }
    } else {
      parallel_for(n, [&](std::size_t b, std::size_t end) {
        for (std::size_t i = b; i < end; ++i) {
          Vec<D> a{};
          for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const Vec<D> d = x[i] - x[j];
            a += term(d, moll.phi_from_r2(norm2(d)), w[i], w[j], mass[j]);
          }
          acc[i] = a;
        }
      }, workers, 8);
    }
  }
  finish_velocity(e, p, terms, acc);
  out.velocity = std::move(acc);
  return out;
}

}  // namespace detail

/// (phi_eps * mu)(X_j) = sum_k phi_eps(X_j - X_k) m_k for every particle.
template <int D>
std::vector<double> conv_phi_at_particles(const ParticleEnsemble<D>& e, const Mollifier<D>& moll) {
  if (e.size() <= detail::kKernelCacheLimit) {
    const std::size_t n = e.size();
    const auto k = detail::phi_table(e, moll);
    std::vector<double> conv(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += k[i * n + j] * e.mass(j);
      conv[i] = s;
    }
    return conv;
  }
  return detail::conv_streaming(e, moll);
}

/// Particle velocities
///   v_i = -grad V(X_i) - sum_j grad W(X_i - X_j) m_j
///         - sum_j [F'(c_i) + F'(c_j)] grad phi_eps(X_i - X_j) m_j,
/// with c = phi_eps * mu at the particles and F'(s) = s^{m-2}.
template <int D>
std::vector<Vec<D>> velocity_field(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p,
                                   const VelocityTerms& terms = {}) {
  return detail::evaluate(e, p, terms).velocity;
}

template <int D>
struct EnergyParts {
  double drift = 0.0;
  double interaction = 0.0;
  double internal = 0.0;
  double total() const { return drift + interaction + internal; }
};

/// E(mu) = sum_i V(X_i) m_i + 1/2 sum_{i,j} W(X_i - X_j) m_i m_j + sum_i F_m(c_i) m_i.
/// The diagonal i = j of the interaction sum is included (W_reg(0) is finite).
template <int D>
EnergyParts<D> energy_parts(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p) {
  p.validate();
  EnergyParts<D> out;
  const std::size_t n = e.size();
  if (!p.drift.is_none())
    for (std::size_t i = 0; i < n; ++i) out.drift += p.drift.value(e.position(i)) * e.mass(i);
  if (!p.interaction.is_none()) {
    std::vector<double> rows(n, 0.0);
    parallel_for(n, [&](std::size_t b, std::size_t end) {
      for (std::size_t i = b; i < end; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          s += p.interaction.value(e.position(i) - e.position(j)) * e.mass(j);
        rows[i] = s * e.mass(i);
      }
    }, worker_count(), 8);
    double s = 0.0;
    for (double r : rows) s += r;
    out.interaction = 0.5 * s;
  }
  const auto conv = conv_phi_at_particles(e, p.mollifier);
  for (std::size_t i = 0; i < n; ++i) out.internal += internal_density(conv[i], p.m) * e.mass(i);
  return out;
}

template <int D>
double discrete_energy(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p) {
  return energy_parts(e, p).total();
}

/// max over particles and axes of |m_i v_i + dE/dX_i| / (1 + |dE/dX_i|), the
/// energy derivative taken by central differences with the given step.
template <int D>
double energy_gradient_check(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p, double step) {
  if (!(step > 0.0)) throw ConfigError("step", "finite-difference step must be positive");
  const auto v = velocity_field(e, p);
  double worst = 0.0;
  std::vector<Vec<D>> pos = e.positions();
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (int k = 0; k < D; ++k) {
      const double x0 = pos[i][k];
      pos[i][k] = x0 + step;
      const double ep = discrete_energy(e.with_positions(pos), p);
      pos[i][k] = x0 - step;
      const double em = discrete_energy(e.with_positions(pos), p);
      pos[i][k] = x0;
      const double de = (ep - em) / (2.0 * step);
      const double err = std::abs(e.mass(i) * v[i][k] + de) / (1.0 + std::abs(de));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

/// sum_i m_i |v_i|^2, the rate at which the discrete energy decreases.
template <int D>
double dissipation(const ParticleEnsemble<D>& e, const std::vector<Vec<D>>& velocity) {
  double s = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) s += e.mass(i) * norm2(velocity[i]);
  return s;
}

template <int D>
double dissipation(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p) {
  return dissipation(e, velocity_field(e, p));
}

}  // namespace blobflow
