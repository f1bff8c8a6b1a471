#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <utility>
#include <vector>

#include "blobflow/error.hpp"
#include "blobflow/mollifier.hpp"
#include "blobflow/parallel.hpp"
#include "blobflow/vec.hpp"

namespace blobflow {

template <int D>
using DensityFn = std::function<double(const Vec<D>&)>;

/// Atomic measure sum_i m_i delta_{X_i}. Masses are shared between all
/// snapshots of a trajectory and never change; only positions move.
template <int D>
class ParticleEnsemble {
 public:
  ParticleEnsemble() = default;

  ParticleEnsemble(std::vector<Vec<D>> positions, std::vector<double> masses)
      : positions_(std::move(positions)),
        masses_(std::make_shared<const std::vector<double>>(std::move(masses))) {
    validate();
  }

  /// Same particles (and the same mass storage) at new positions.
  ParticleEnsemble with_positions(std::vector<Vec<D>> positions) const {
    if (positions.size() != positions_.size())
      throw ConfigError("positions", "particle count must not change");
    ParticleEnsemble out;
    out.positions_ = std::move(positions);
    out.masses_ = masses_;
    return out;
  }

  std::size_t size() const noexcept { return positions_.size(); }
  bool empty() const noexcept { return positions_.empty(); }
  const std::vector<Vec<D>>& positions() const noexcept { return positions_; }
  const std::vector<double>& masses() const noexcept { return *masses_; }
  const Vec<D>& position(std::size_t i) const { return positions_[i]; }
  double mass(std::size_t i) const { return (*masses_)[i]; }
  bool shares_masses_with(const ParticleEnsemble& o) const noexcept { return masses_ == o.masses_; }

  double total_mass() const {
    return std::accumulate(masses_->begin(), masses_->end(), 0.0);
  }

  Vec<D> first_moment() const {
    Vec<D> s{};
    for (std::size_t i = 0; i < size(); ++i) s += positions_[i] * mass(i);
    return s;
  }

 private:
  void validate() const {
    if (positions_.size() != masses_->size())
      throw ConfigError("ensemble", "positions and masses differ in length");
    if (positions_.empty()) throw ConfigError("ensemble", "ensemble has no particles");
    double total = 0.0;
    for (double m : *masses_) {
      if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("ensemble", "masses must be finite and nonnegative");
      total += m;
    }
    if (!(total > 0.0)) throw ConfigError("ensemble", "total mass must be positive");
    for (const auto& x : positions_)
      if (!all_finite(x)) throw ConfigError("ensemble", "positions must be finite");
  }

  std::vector<Vec<D>> positions_;
  std::shared_ptr<const std::vector<double>> masses_ = std::make_shared<const std::vector<double>>();
};

/// Regular grid {i h : i in Z^D, |i_k h| <= R for every axis}, i.e. the box
/// of half-width R. Nodes are ordered lexicographically (first axis slowest).
template <int D>
class GridSpec {
 public:
  GridSpec(double h, double radius) : h_(h), radius_(radius) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("grid.h", "spacing must be positive");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigError("grid.R", "radius must be positive");
    half_ = static_cast<long>(std::floor(radius / h + 1e-9));
    per_axis_ = static_cast<std::size_t>(2 * half_ + 1);
    count_ = 1;
    for (int k = 0; k < D; ++k) count_ *= per_axis_;
  }

  double spacing() const noexcept { return h_; }
  double radius() const noexcept { return radius_; }
  std::size_t per_axis() const noexcept { return per_axis_; }
  std::size_t size() const noexcept { return count_; }
  long half_count() const noexcept { return half_; }
  double cell_volume() const noexcept { return std::pow(h_, D); }

  std::array<long, D> index(std::size_t flat) const {
    std::array<long, D> idx{};
    for (int k = D - 1; k >= 0; --k) {
      idx[k] = static_cast<long>(flat % per_axis_) - half_;
      flat /= per_axis_;
    }
    return idx;
  }

  Vec<D> node(std::size_t flat) const {
    const auto idx = index(flat);
    Vec<D> x;
    for (int k = 0; k < D; ++k) x[k] = static_cast<double>(idx[k]) * h_;
    return x;
  }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.h_ == b.h_ && a.half_ == b.half_;
  }

 private:
  double h_;
  double radius_;
  long half_ = 0;
  std::size_t per_axis_ = 0;
  std::size_t count_ = 0;
};

/// Scalar field sampled at the nodes of a GridSpec, lexicographic order.
template <int D>
struct GridField {
  GridSpec<D> grid;
  std::vector<double> values;

  GridField(GridSpec<D> g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != grid.size()) throw ConfigError("grid_field", "value count does not match the grid");
  }

  /// f must be safe to call concurrently.
  static GridField sample(const GridSpec<D>& g, const DensityFn<D>& f) {
    std::vector<double> v(g.size());
    parallel_for(g.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t n = b; n < e; ++n) v[n] = f(g.node(n));
    });
    return {g, std::move(v)};
  }
};

/// CSV: grid coordinates then value, one row per node.
template <int D>
void write_csv(std::ostream& os, const GridField<D>& f, const char* value_name = "value") {
  os << (D == 1 ? "x," : "x,y,") << value_name << '\n';
  os.precision(17);
  for (std::size_t n = 0; n < f.grid.size(); ++n) {
    const auto x = f.grid.node(n);
    for (int k = 0; k < D; ++k) os << x[k] << ',';
    os << f.values[n] << '\n';
  }
}

struct DiscretizeOptions {
  bool normalize = false;
  double total_mass = 1.0;
  /// m_i = integral of rho0 over the cell of side h around ih (Gauss-Legendre)
  /// instead of rho0(ih) h^d.
  bool cell_quadrature = false;
  /// Particles lighter than drop_fraction * max mass are discarded.
  double drop_fraction = 1e-14;
};

/// One particle per grid node at position ih with mass rho0(ih) h^d.
template <int D>
ParticleEnsemble<D> discretize_density(const DensityFn<D>& rho0, const GridSpec<D>& grid,
                                       const DiscretizeOptions& opt = {}) {
  static constexpr std::array<double, 4> gl_x = {-0.8611363115940526, -0.3399810435848563,
                                                 0.3399810435848563, 0.8611363115940526};
  static constexpr std::array<double, 4> gl_w = {0.3478548451374538, 0.6521451548625461,
                                                 0.6521451548625461, 0.3478548451374538};
  const double h = grid.spacing();
  const double vol = grid.cell_volume();
  std::vector<double> raw(grid.size());
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Vec<D> c = grid.node(n);
    double m = 0.0;
    if (!opt.cell_quadrature) {
      m = rho0(c) * vol;
    } else {
      std::array<std::size_t, D> q{};
      const std::size_t total = D == 1 ? 4 : 16;
      for (std::size_t t = 0; t < total; ++t) {
        std::size_t r = t;
        double w = 1.0;
        Vec<D> x = c;
        for (int k = 0; k < D; ++k) {
          q[k] = r % 4;
          r /= 4;
          x[k] += 0.5 * h * gl_x[q[k]];
          w *= 0.5 * gl_w[q[k]];
        }
        m += w * rho0(x);
      }
      m *= vol;
    }
    if (!std::isfinite(m) || m < 0.0)
      throw ConfigError("initial_density", "density must be finite and nonnegative on the grid");
    raw[n] = m;
  }
  const double max_mass = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  if (!(max_mass > 0.0)) throw ConfigError("initial_density", "density vanishes on the whole grid");

  std::vector<Vec<D>> pos;
  std::vector<double> mass;
  const double cut = opt.drop_fraction * max_mass;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    if (raw[n] < cut || raw[n] == 0.0) continue;
    pos.push_back(grid.node(n));
    mass.push_back(raw[n]);
  }
  if (opt.normalize) {
    if (!(opt.total_mass > 0.0)) throw ConfigError("total_mass", "target mass must be positive");
    const double s = opt.total_mass / std::accumulate(mass.begin(), mass.end(), 0.0);
    for (double& m : mass) m *= s;
  }
  return {std::move(pos), std::move(mass)};
}

/// M2 = sum_i m_i |X_i|^2
template <int D>
double second_moment(const ParticleEnsemble<D>& e) {
  double s = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) s += e.mass(i) * norm2(e.position(i));
  return s;
}

/// (phi_eps * mu)(x) = sum_i phi_eps(x - X_i) m_i
template <int D>
double blob_density(const ParticleEnsemble<D>& e, const Mollifier<D>& moll, const Vec<D>& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) s += moll.phi(x - e.position(i)) * e.mass(i);
  return s;
}

template <int D>
GridField<D> sample_on_grid(const ParticleEnsemble<D>& e, const Mollifier<D>& moll, const GridSpec<D>& grid) {
  std::vector<double> v(grid.size());
  parallel_for(grid.size(), [&](std::size_t b, std::size_t end) {
    for (std::size_t n = b; n < end; ++n) v[n] = blob_density(e, moll, grid.node(n));
  }, worker_count(), 16);
  return {grid, std::move(v)};
}

}  // namespace blobflow
