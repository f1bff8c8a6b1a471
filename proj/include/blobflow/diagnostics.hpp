#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "blobflow/dynamics.hpp"
#include "blobflow/ensemble.hpp"
#include "blobflow/error.hpp"
#include "blobflow/integrator.hpp"
#include "blobflow/parallel.hpp"
#include "blobflow/vec.hpp"

namespace blobflow {

/// Tensor grid for x-integrals of mollified fields: nodes lower + k * spacing,
/// k < count per axis, integrated with the trapezoid rule (the integrands
/// vanish at the boundary to working precision).
template <int D>
struct QuadratureGrid {
  Vec<D> lower{};
  double spacing = 0.0;
  std::array<std::size_t, D> count{};

  static constexpr double kPaddingWidths = 6.0;
  static constexpr double kDefaultFraction = 0.25;

  /// Bounding box of the given ensembles padded by 6 eps, spacing
  /// fraction * eps. The fraction must not exceed 1/2.
  template <typename Range>
  static QuadratureGrid covering(const Range& ensembles, double epsilon, double fraction = kDefaultFraction) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon", "bandwidth must be positive");
    if (!(fraction > 0.0 && fraction <= 0.5))
      throw ConfigError("quadrature.fraction", "spacing must satisfy 0 < spacing <= eps / 2");
    Vec<D> lo, hi;
    for (int k = 0; k < D; ++k) {
      lo[k] = std::numeric_limits<double>::infinity();
      hi[k] = -std::numeric_limits<double>::infinity();
    }
    bool any = false;
    for (const auto& e : ensembles)
      for (const auto& x : e.positions()) {
        any = true;
        for (int k = 0; k < D; ++k) {
          lo[k] = std::min(lo[k], x[k]);
          hi[k] = std::max(hi[k], x[k]);
        }
      }
    if (!any) throw ConfigError("ensemble", "no particles to cover");
    QuadratureGrid q;
    q.spacing = fraction * epsilon;
    const double pad = kPaddingWidths * epsilon;
    for (int k = 0; k < D; ++k) {
      q.lower[k] = lo[k] - pad;
      q.count[k] = static_cast<std::size_t>(std::ceil((hi[k] - lo[k] + 2.0 * pad) / q.spacing)) + 1;
    }
    return q;
  }

  static QuadratureGrid covering(const ParticleEnsemble<D>& e, double epsilon, double fraction = kDefaultFraction) {
    return covering(std::vector<ParticleEnsemble<D>>{e}, epsilon, fraction);
  }

  std::size_t size() const {
    std::size_t n = 1;
    for (int k = 0; k < D; ++k) n *= count[k];
    return n;
  }

  Vec<D> node(std::size_t flat) const {
    Vec<D> x;
    for (int k = D - 1; k >= 0; --k) {
      x[k] = lower[k] + static_cast<double>(flat % count[k]) * spacing;
      flat /= count[k];
    }
    return x;
  }

  double cell_volume() const { return std::pow(spacing, D); }
};

namespace detail {

/// Values of zeta * mu, grad zeta * mu, zeta * p and grad zeta * p at x, where
/// p carries the reweighted masses w.
template <int D>
struct MollifiedFields {
  double z = 0.0;
  Vec<D> gz{};
  double zp = 0.0;
  Vec<D> gzp{};
};

template <int D>
MollifiedFields<D> mollified_fields(const ParticleEnsemble<D>& e, const std::vector<double>& w,
                                    const Mollifier<D>& moll, const Vec<D>& x) {
  MollifiedFields<D> f;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const Vec<D> d = x - e.position(i);
    const double z = moll.zeta(d);
    if (z == 0.0) continue;
    const Vec<D> g = moll.zeta_grad(d);
    f.z += z * e.mass(i);
    f.gz += g * e.mass(i);
    f.zp += z * w[i];
    f.gzp += g * w[i];
  }
  return f;
}

/// c_i^{m-2} for every particle, c = phi * mu at the particles.
template <int D>
std::vector<double> internal_weights(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p) {
  p.validate();
  auto c = conv_phi_at_particles(e, p.mollifier);
  for (double& v : c) v = internal_weight(v, p.m);
  return c;
}

template <typename F>
double grid_sum(std::size_t n, const F& f) {
  std::vector<double> part(n, 0.0);
  parallel_for(n, [&](std::size_t b, std::size_t end) {
    for (std::size_t g = b; g < end; ++g) part[g] = f(g);
  }, worker_count(), 256);
  double s = 0.0;
  for (double v : part) s += v;
  return s;
}

}  // namespace detail

/// int |grad zeta * p| d(zeta * mu) + int |grad zeta * mu| d(zeta * p), with
/// p = sum_i m_i c_i^{m-2} delta_{X_i}.
template <int D>
double nonlocal_sobolev(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p, const QuadratureGrid<D>& q) {
  const auto c = detail::internal_weights(e, p);
  std::vector<double> w(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) w[i] = e.mass(i) * c[i];
  const auto& moll = p.mollifier;
  const double s = detail::grid_sum(q.size(), [&](std::size_t g) {
    const auto f = detail::mollified_fields(e, w, moll, q.node(g));
    return norm(f.gzp) * f.z + norm(f.gz) * f.zp;
  });
  return s * q.cell_volume();
}

/// int int zeta(x - y) |(grad zeta * p)(x) + (grad zeta * mu)(x) c(y)^{m-2}| dmu(y) dx
template <int D>
double bv_eps_norm(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p, const QuadratureGrid<D>& q) {
  const auto c = detail::internal_weights(e, p);
  std::vector<double> w(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) w[i] = e.mass(i) * c[i];
  const auto& moll = p.mollifier;
  const double s = detail::grid_sum(q.size(), [&](std::size_t g) {
    const Vec<D> x = q.node(g);
    const auto f = detail::mollified_fields(e, w, moll, x);
    double inner = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) {
      const double z = moll.zeta(x - e.position(j));
      if (z == 0.0) continue;
      inner += z * e.mass(j) * norm(f.gzp + f.gz * c[j]);
    }
    return inner;
  });
  return s * q.cell_volume();
}

enum class Observable { energy, dissipation, second_moment, nonlocal_sobolev, bv_norm };

inline const char* column_name(Observable o) {
  switch (o) {
    case Observable::energy: return "energy";
    case Observable::dissipation: return "dissipation";
    case Observable::second_moment: return "second_moment";
    case Observable::nonlocal_sobolev: return "nonlocal_sobolev";
    case Observable::bv_norm: return "bv_eps_norm";
  }
  return "";
}

struct SeriesTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t k = 0; k < columns.size(); ++k)
      if (columns[k] == name) return k;
    throw ConfigError("column", "no column named " + name);
  }
};

inline void write_csv(std::ostream& os, const SeriesTable& t) {
  for (std::size_t k = 0; k < t.columns.size(); ++k) os << (k ? "," : "") << t.columns[k];
  os << '\n';
  os.precision(17);
  for (const auto& r : t.rows) {
    for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << r[k];
    os << '\n';
  }
}

/// One row per snapshot: t followed by the requested observables in the
/// fixed order energy, dissipation, second_moment, nonlocal_sobolev,
/// bv_eps_norm. The quadrature grid covers every snapshot, so all rows share
/// it; spacing is fraction * eps.
template <int D>
SeriesTable assemble_series(const Trajectory<D>& traj, const ProblemSpec<D>& p, const std::set<Observable>& which,
                            double fraction = QuadratureGrid<D>::kDefaultFraction) {
  SeriesTable t;
  t.columns.push_back("t");
  for (Observable o : which) t.columns.push_back(column_name(o));
  const bool needs_grid = which.count(Observable::nonlocal_sobolev) || which.count(Observable::bv_norm);
  QuadratureGrid<D> q;
  if (needs_grid && !traj.snapshots.empty()) {
    std::vector<ParticleEnsemble<D>> all;
    for (const auto& s : traj.snapshots) all.push_back(s.ensemble);
    q = QuadratureGrid<D>::covering(all, p.mollifier.epsilon(), fraction);
  }
  for (const auto& s : traj.snapshots) {
    std::vector<double> row{s.t};
    for (Observable o : which) {
      switch (o) {
        case Observable::energy: row.push_back(discrete_energy(s.ensemble, p)); break;
        case Observable::dissipation: row.push_back(dissipation(s.ensemble, p)); break;
        case Observable::second_moment: row.push_back(second_moment(s.ensemble)); break;
        case Observable::nonlocal_sobolev: row.push_back(nonlocal_sobolev(s.ensemble, p, q)); break;
        case Observable::bv_norm: row.push_back(bv_eps_norm(s.ensemble, p, q)); break;
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace blobflow
