#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "blobflow/ensemble.hpp"
#include "blobflow/error.hpp"
#include "blobflow/quadrature.hpp"
#include "blobflow/transport.hpp"
#include "blobflow/vec.hpp"

namespace blobflow {

/// sum_i |a(ih) - b(ih)| h^d
template <int D>
double l1_error(const GridField<D>& a, const GridField<D>& b) {
  if (!(a.grid == b.grid)) throw ConfigError("grid", "fields live on different grids");
  double s = 0.0;
  for (std::size_t n = 0; n < a.values.size(); ++n) s += std::abs(a.values[n] - b.values[n]);
  return s * a.grid.cell_volume();
}

/// max_i |a(ih) - b(ih)|
template <int D>
double linf_error(const GridField<D>& a, const GridField<D>& b) {
  if (!(a.grid == b.grid)) throw ConfigError("grid", "fields live on different grids");
  double s = 0.0;
  for (std::size_t n = 0; n < a.values.size(); ++n) s = std::max(s, std::abs(a.values[n] - b.values[n]));
  return s;
}

template <int D>
struct DiscreteMeasure {
  std::vector<Vec<D>> points;
  std::vector<double> weights;

  DiscreteMeasure() = default;
  DiscreteMeasure(std::vector<Vec<D>> p, std::vector<double> w) : points(std::move(p)), weights(std::move(w)) {
    if (points.size() != weights.size()) throw ConfigError("measure", "points and weights differ in length");
    for (double x : weights)
      if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("measure", "weights must be finite and nonnegative");
  }

  std::size_t size() const noexcept { return points.size(); }
  double total() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
};

/// Atoms at the grid nodes with weight value * h^d. Nodes whose value is at
/// most threshold * max are dropped.
template <int D>
DiscreteMeasure<D> measure_from_field(const GridField<D>& f, double threshold = 0.0) {
  double vmax = 0.0;
  for (double v : f.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("field", "field values must be finite and nonnegative");
    vmax = std::max(vmax, v);
  }
  if (!(vmax > 0.0)) throw ConfigError("field", "field vanishes everywhere");
  const double cut = threshold * vmax;
  const double vol = f.grid.cell_volume();
  DiscreteMeasure<D> out;
  for (std::size_t n = 0; n < f.values.size(); ++n) {
    if (f.values[n] <= cut || f.values[n] == 0.0) continue;
    out.points.push_back(f.grid.node(n));
    out.weights.push_back(f.values[n] * vol);
  }
  return out;
}

template <int D>
DiscreteMeasure<D> measure_from_ensemble(const ParticleEnsemble<D>& e) {
  if (!(e.total_mass() > 0.0)) throw ConfigError("ensemble", "ensemble has no mass");
  return {e.positions(), e.masses()};
}

struct W2Options {
  /// Rescale each measure to unit mass before comparing. Without it the
  /// total masses must agree to 1e-9 (relative).
  bool normalize = false;
  double mass_tolerance = 1e-9;
};

namespace detail {

inline void check_masses(double ta, double tb, const W2Options& opt) {
  if (!(ta > 0.0) || !(tb > 0.0)) throw ConfigError("measure", "measures must have positive mass");
  if (!opt.normalize && std::abs(ta - tb) > opt.mass_tolerance * std::max(ta, tb))
    throw ConfigError("measure", "total masses differ");
}

struct SortedAtoms {
  std::vector<double> x;
  std::vector<double> w;
};

inline SortedAtoms sorted_unit_atoms(const DiscreteMeasure<1>& m, double total) {
  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m.points[a][0] < m.points[b][0]; });
  SortedAtoms out;
  for (std::size_t k : order) {
    if (m.weights[k] == 0.0) continue;
    out.x.push_back(m.points[k][0]);
    out.w.push_back(m.weights[k] / total);
  }
  return out;
}

}  // namespace detail

/// W2 between two atomic measures on the line: the squared quantile difference
/// integrated exactly over the merged breakpoints of both step quantiles.
inline double w2_1d(const DiscreteMeasure<1>& a, const DiscreteMeasure<1>& b, const W2Options& opt = {}) {
  const double ta = a.total(), tb = b.total();
  detail::check_masses(ta, tb, opt);
  // Both are rescaled to unit mass; the check above bounds the change.
  const auto A = detail::sorted_unit_atoms(a, ta);
  const auto B = detail::sorted_unit_atoms(b, tb);
  std::size_t i = 0, j = 0;
  double ca = A.w[0], cb = B.w[0], s = 0.0, acc = 0.0;
  // Rounding may leave one side a hair short of 1; that residue is dropped.
  while (i < A.x.size() && j < B.x.size()) {
    const double next = std::min(ca, cb);
    const double d = A.x[i] - B.x[j];
    acc += (next - s) * d * d;
    s = next;
    const bool adv_a = ca <= cb, adv_b = cb <= ca;
    if (adv_a && ++i < A.x.size()) ca += A.w[i];
    if (adv_b && ++j < B.x.size()) cb += B.w[j];
  }
  return std::sqrt(std::max(acc, 0.0));
}

/// Quantile function of a density on [lo, hi], normalized to unit mass.
/// The CDF is tabulated at cell edges with 4-point Gauss-Legendre per cell;
/// inside a cell it is evaluated by the same rule on the partial cell and
/// inverted by bisection.
class DensityQuantile {
 public:
  DensityQuantile(DensityFn<1> rho, double lo, double hi, std::size_t cells = 1u << 15)
      : rho_(std::move(rho)), lo_(lo), hi_(hi), cells_(cells) {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw ConfigError("domain", "need lo < hi");
    if (cells == 0) throw ConfigError("cells", "need at least one cell");
    dx_ = (hi - lo) / static_cast<double>(cells);
    cdf_.assign(cells + 1, 0.0);
    for (std::size_t k = 0; k < cells; ++k) {
      const double m = partial(k, edge(k + 1));
      if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("density", "density must be finite and nonnegative");
      cdf_[k + 1] = cdf_[k] + m;
    }
    total_ = cdf_.back();
    if (!(total_ > 0.0)) throw ConfigError("density", "density has no mass on the domain");
  }

  double total_mass() const noexcept { return total_; }
  double lower() const noexcept { return lo_; }
  double upper() const noexcept { return hi_; }

  /// Normalized CDF.
  double cdf(double x) const {
    if (x <= lo_) return 0.0;
    if (x >= hi_) return 1.0;
    const auto k = std::min(cells_ - 1, static_cast<std::size_t>((x - lo_) / dx_));
    return (cdf_[k] + partial(k, x)) / total_;
  }

  /// inf{x : F(x) >= s}; s outside (0, 1) is clamped to the support edges.
  double operator()(double s) const {
    const double target = std::clamp(s, 0.0, 1.0) * total_;
    // First edge whose cumulative mass reaches the target.
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), target);
    if (s <= 0.0) it = std::upper_bound(cdf_.begin(), cdf_.end(), 0.0);
    if (it == cdf_.begin()) return lo_;
    if (it == cdf_.end()) return hi_;
    const auto k = static_cast<std::size_t>(it - cdf_.begin()) - 1;
    double a = edge(k), b = edge(k + 1);
    const double need = target - cdf_[k];
    while (b - a > kTol) {
      const double mid = 0.5 * (a + b);
      (partial(k, mid) < need ? a : b) = mid;
    }
    return 0.5 * (a + b);
  }

  static constexpr double kTol = 1e-10;

 private:
  double edge(std::size_t k) const { return k == cells_ ? hi_ : lo_ + static_cast<double>(k) * dx_; }

  /// Mass of the cell k on [edge(k), x].
  double partial(std::size_t k, double x) const {
    static constexpr double gx[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                     0.8611363115940526};
    static constexpr double gw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                     0.3478548451374538};
    const double a = edge(k);
    const double half = 0.5 * (x - a), mid = 0.5 * (x + a);
    double s = 0.0;
    for (int q = 0; q < 4; ++q) s += gw[q] * rho_(Vec<1>{{mid + half * gx[q]}});
    return s * half;
  }

  DensityFn<1> rho_;
  double lo_, hi_;
  std::size_t cells_;
  double dx_ = 0.0;
  double total_ = 0.0;
  std::vector<double> cdf_;
};

/// Generalized inverse of the CDF of rho on [lo, hi] at s in (0, 1).
inline double quantile_from_density(const DensityFn<1>& rho, double lo, double hi, double s) {
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("s", "quantile level must lie in (0, 1)");
  return DensityQuantile(rho, lo, hi)(s);
}

/// W2 between an atomic measure and a continuous one given by its quantile.
/// (0, 1) is split at the cumulative masses of the atoms; on each piece the
/// atomic quantile is constant and the squared difference is integrated by
/// adaptive Simpson (absolute tolerance 1e-8 overall).
inline double w2_1d(const DiscreteMeasure<1>& a, const DensityQuantile& q, const W2Options& opt = {}) {
  const double ta = a.total();
  detail::check_masses(ta, 1.0, opt);
  const auto A = detail::sorted_unit_atoms(a, ta);
  constexpr double kAbsTol = 1e-8;
  double s0 = 0.0, acc = 0.0;
  for (std::size_t k = 0; k < A.x.size(); ++k) {
    const double s1 = k + 1 == A.x.size() ? 1.0 : std::min(1.0, s0 + A.w[k]);
    if (s1 > s0) {
      const double x = A.x[k];
      auto f = [&](double s) {
        const double d = x - q(s);
        return d * d;
      };
      acc += adaptive_simpson(f, s0, s1, kAbsTol * (s1 - s0), 30);
    }
    s0 = s1;
  }
  return std::sqrt(std::max(acc, 0.0));
}

inline constexpr std::size_t kW2MaxAtoms = 20000;

struct W2Result2d {
  double distance = 0.0;
  std::size_t iterations = 0;
  double min_reduced_cost = 0.0;
};

/// Exact W2 between two atomic measures in the plane (squared-distance cost),
/// with the optimality certificate of the transport solve.
inline W2Result2d w2_2d_detailed(const DiscreteMeasure<2>& a, const DiscreteMeasure<2>& b,
                                 const W2Options& opt = {}) {
  const double ta = a.total(), tb = b.total();
  detail::check_masses(ta, tb, opt);
  if (a.size() > kW2MaxAtoms || b.size() > kW2MaxAtoms)
    throw ConfigError("measure", "too many atoms for exact transport");
  std::vector<double> wa(a.weights), wb(b.weights);
  for (double& w : wa) w /= ta;
  for (double& w : wb) w /= tb;
  // Balance exactly so the solver sees equal totals after rescaling.
  const double sa = std::accumulate(wa.begin(), wa.end(), 0.0), sb = std::accumulate(wb.begin(), wb.end(), 0.0);
  for (double& w : wb) w *= sa / sb;
  const auto& pa = a.points;
  const auto& pb = b.points;
  auto cost = [&pa, &pb](std::size_t i, std::size_t j) { return norm2(pa[i] - pb[j]); };
  const auto r = solve_transport(wa, wb, cost);
  if (r.min_reduced_cost < -1e-9) throw NumericalError("transport: optimality certificate failed");
  return {std::sqrt(std::max(r.cost, 0.0)), r.iterations, r.min_reduced_cost};
}

inline double w2_2d(const DiscreteMeasure<2>& a, const DiscreteMeasure<2>& b, const W2Options& opt = {}) {
  return w2_2d_detailed(a, b, opt).distance;
}

}  // namespace blobflow
