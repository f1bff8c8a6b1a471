#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "blobflow/dynamics.hpp"
#include "blobflow/ensemble.hpp"
#include "blobflow/error.hpp"

namespace blobflow {

struct Rk4Fixed {
  double dt = 1e-3;
};

/// Dormand-Prince 5(4) with error control on the 5th-order solution.
struct Rk45Adaptive {
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
  double dt_init = 1e-4;
  double dt_max = std::numeric_limits<double>::infinity();
};

struct IntegratorConfig {
  std::variant<Rk4Fixed, Rk45Adaptive> scheme = Rk45Adaptive{};
  double t_final = 1.0;
  /// Output times in [0, t_final]; 0 and t_final are always recorded.
  std::vector<double> record_times;

  void validate() const {
    if (!(t_final > 0.0) || !std::isfinite(t_final))
      throw ConfigError("integrator.t_final", "final time must be positive");
    if (const auto* f = std::get_if<Rk4Fixed>(&scheme)) {
      if (!(f->dt > 0.0)) throw ConfigError("integrator.dt", "time step must be positive");
    } else {
      const auto& a = std::get<Rk45Adaptive>(scheme);
      if (!(a.rel_tol > 0.0) || !(a.abs_tol > 0.0))
        throw ConfigError("integrator.tolerances", "tolerances must be positive");
      if (!(a.dt_init > 0.0) || !(a.dt_max > 0.0))
        throw ConfigError("integrator.dt_init", "initial and maximal steps must be positive");
    }
    for (double t : record_times)
      if (!(t >= 0.0 && t <= t_final))
        throw ConfigError("integrator.record_times", "record times must lie in [0, t_final]");
    if (!std::is_sorted(record_times.begin(), record_times.end()))
      throw ConfigError("integrator.record_times", "record times must be sorted");
  }

  /// Sorted, de-duplicated output times including 0 and t_final.
  std::vector<double> output_times() const {
    std::vector<double> t = record_times;
    t.push_back(0.0);
    t.push_back(t_final);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }
};

using OdeRhs = std::function<void(double t, const std::vector<double>& y, std::vector<double>& dydt)>;
using OdeObserver = std::function<void(double t, const std::vector<double>& y)>;
/// Called after every accepted step; may modify the state in place (same
/// length) and returns true when it did.
using OdeStepHook = std::function<bool(double t, std::vector<double>& y)>;

struct OdeOutcome {
  bool completed = true;
  double t_reached = 0.0;
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evaluations = 0;
  std::string stop_reason;
};

namespace detail {

inline bool finite(const std::vector<double>& y) {
  return std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); });
}

/// Classical RK4 step of size dt from (t, y) into y_out.
inline void rk4_step(const OdeRhs& f, double t, const std::vector<double>& y, double dt,
                     std::vector<double>& y_out, std::array<std::vector<double>, 5>& s) {
  const std::size_t n = y.size();
  auto& [k1, k2, k3, k4, tmp] = s;
  for (auto& v : s) v.resize(n);
  f(t, y, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
  f(t + 0.5 * dt, tmp, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
  f(t + 0.5 * dt, tmp, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * k3[i];
  f(t + dt, tmp, k4);
  y_out.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    y_out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace detail

/// Integrates y' = f(t, y) from 0 to cfg.t_final, calling observe at every
/// output time. Steps are shortened to land on output times exactly. The
/// adaptive scheme stops early (completed = false) when the step size drops
/// below 1e-12 * t_final, which signals finite-time blow-up.
inline OdeOutcome integrate_ode(const OdeRhs& f, std::vector<double> y, const IntegratorConfig& cfg,
                                const OdeObserver& observe, const OdeStepHook& after_step = {}) {
  cfg.validate();
  const std::vector<double> outputs = cfg.output_times();
  const double t_end = cfg.t_final;
  const double dt_min = 1e-12 * t_end;
  OdeOutcome out;
  std::size_t next_out = 0;
  double t = 0.0;
  auto emit = [&] {
    while (next_out < outputs.size() && outputs[next_out] <= t) {
      observe(outputs[next_out], y);
      ++next_out;
    }
  };
  emit();
  const OdeRhs counted = [&](double tt, const std::vector<double>& yy, std::vector<double>& dy) {
    ++out.rhs_evaluations;
    f(tt, yy, dy);
  };

  if (const auto* fixed = std::get_if<Rk4Fixed>(&cfg.scheme)) {
    std::array<std::vector<double>, 5> scratch;
    std::vector<double> y_new;
    while (next_out < outputs.size()) {
      const double target = outputs[next_out];
      const double remaining = target - t;
      const double dt = remaining <= fixed->dt * (1.0 + 1e-12) ? remaining : fixed->dt;
      detail::rk4_step(counted, t, y, dt, y_new, scratch);
      if (!detail::finite(y_new))
        throw NumericalError("non-finite state after RK4 step at t = " + std::to_string(t));
      y.swap(y_new);
      t = dt == remaining ? target : t + dt;
      ++out.steps;
      if (after_step) after_step(t, y);
      emit();
    }
    out.t_reached = t;
    return out;
  }

  // Dormand-Prince 5(4).
  const auto& ad = std::get<Rk45Adaptive>(cfg.scheme);
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b_hat
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;

  const std::size_t n = y.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n);
  counted(t, y, k1);
  double dt = std::min(ad.dt_init, ad.dt_max);
  bool have_k1 = true;

  while (next_out < outputs.size()) {
    const double target = outputs[next_out];
    bool landing = false;
    double h = dt;
    if (t + h >= target || target - (t + h) < 1e-12 * t_end) {
      h = target - t;
      landing = true;
    }
    if (!have_k1) {
      counted(t, y, k1);
      have_k1 = true;
    }
    double err = std::numeric_limits<double>::infinity();
    try {
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k1[i];
      counted(t + c2 * h, tmp, k2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
      counted(t + c3 * h, tmp, k3);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
      counted(t + c4 * h, tmp, k4);
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
      counted(t + c5 * h, tmp, k5);
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
      counted(t + h, tmp, k6);
      for (std::size_t i = 0; i < n; ++i)
        y_new[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
      counted(t + h, y_new, k7);
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        const double sc = ad.abs_tol + ad.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        acc += (ei / sc) * (ei / sc);
      }
      err = n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
      if (!std::isfinite(err) || !detail::finite(y_new)) err = std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      err = std::numeric_limits<double>::infinity();
    }

    if (err <= 1.0) {
      t = landing ? target : t + h;
      y.swap(y_new);
      k1.swap(k7);  // first-same-as-last
      ++out.steps;
      if (after_step && after_step(t, y)) have_k1 = false;
      emit();
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      // A shortened landing step says nothing about the natural step size.
      if (!landing || h >= dt) dt = std::min(h * fac, ad.dt_max);
    } else {
      ++out.rejected;
      const double fac = std::isfinite(err) ? std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9) : 0.1;
      dt = h * fac;
      if (dt < dt_min) {
        out.completed = false;
        out.stop_reason = "step size underflow at t = " + std::to_string(t);
        break;
      }
    }
  }
  out.t_reached = t;
  return out;
}

/// One classical RK4 step of the particle system.
template <int D>
ParticleEnsemble<D> step_rk4(const ParticleEnsemble<D>& e, const ProblemSpec<D>& p, double dt) {
  if (!(dt >= 0.0)) throw ConfigError("dt", "time step must be nonnegative");
  if (dt == 0.0) return e;
  auto stage = [&](const std::vector<Vec<D>>& x) { return velocity_field(e.with_positions(x), p); };
  const auto& x0 = e.positions();
  const std::size_t n = e.size();
  const auto k1 = stage(x0);
  std::vector<Vec<D>> tmp(n);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x0[i] + k1[i] * (0.5 * dt);
  const auto k2 = stage(tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x0[i] + k2[i] * (0.5 * dt);
  const auto k3 = stage(tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x0[i] + k3[i] * dt;
  const auto k4 = stage(tmp);
  for (std::size_t i = 0; i < n; ++i) {
    tmp[i] = x0[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
    if (!all_finite(tmp[i])) throw NumericalError("non-finite position at particle " + std::to_string(i));
  }
  return e.with_positions(std::move(tmp));
}

struct DiagnosticsRow {
  double t = 0.0;
  double energy = 0.0;
  double dissipation = 0.0;
  double second_moment = 0.0;
  std::size_t n_particles = 0;
};

template <int D>
struct Snapshot {
  double t;
  ParticleEnsemble<D> ensemble;
};

template <int D>
struct Trajectory {
  std::vector<Snapshot<D>> snapshots;
  std::vector<DiagnosticsRow> diagnostics;
  /// Set when the adaptive step collapsed before t_final.
  bool blew_up = false;
  double t_reached = 0.0;
  std::string stop_reason;
  OdeOutcome solver;
};

template <int D>
DiagnosticsRow diagnose(double t, const ParticleEnsemble<D>& e, const ProblemSpec<D>& p) {
  DiagnosticsRow r;
  r.t = t;
  r.energy = discrete_energy(e, p);
  r.dissipation = dissipation(e, p);
  r.second_moment = second_moment(e);
  r.n_particles = e.size();
  return r;
}

namespace detail {

template <int D>
std::vector<double> flatten(const std::vector<Vec<D>>& x) {
  std::vector<double> y(x.size() * D);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int k = 0; k < D; ++k) y[i * D + k] = x[i][k];
  return y;
}

template <int D>
std::vector<Vec<D>> unflatten(const std::vector<double>& y) {
  std::vector<Vec<D>> x(y.size() / D);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int k = 0; k < D; ++k) x[i][k] = y[i * D + k];
  return x;
}

/// Indices of y sorted by position, ties broken by index.
inline std::vector<std::size_t> position_order(const std::vector<double>& y) {
  std::vector<std::size_t> order(y.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return y[a] < y[b] || (y[a] == y[b] && a < b);
  });
  return order;
}

/// Walks y in the order of the previous step. Every run of particles that met
/// or passed each other is moved to its centre of mass. Returns whether any
/// position changed.
inline bool snap_collisions(const std::vector<double>& mass, const std::vector<std::size_t>& order,
                            std::vector<double>& y) {
  bool changed = false;
  std::size_t k = 0;
  while (k < order.size()) {
    std::size_t end = k + 1;
    double hi = y[order[k]];
    bool distinct = false;
    while (end < order.size() && y[order[end]] <= hi) {
      distinct = distinct || y[order[end]] != y[order[k]];
      ++end;
    }
    if (distinct) {
      double mx = 0.0, ms = 0.0;
      for (std::size_t q = k; q < end; ++q) {
        mx += mass[order[q]] * y[order[q]];
        ms += mass[order[q]];
      }
      const double c = ms > 0.0 ? mx / ms : hi;
      for (std::size_t q = k; q < end; ++q) y[order[q]] = c;
      changed = true;
    }
    k = end;
  }
  return changed;
}

/// Gives every group of coincident particles its mass-weighted mean velocity,
/// so the group stays coincident bit for bit.
inline void share_cluster_velocity(const std::vector<double>& mass, const std::vector<double>& y,
                                   std::vector<double>& v) {
  const auto order = position_order(y);
  std::size_t k = 0;
  while (k < order.size()) {
    std::size_t end = k + 1;
    while (end < order.size() && y[order[end]] == y[order[k]]) ++end;
    if (end - k > 1) {
      double mv = 0.0, ms = 0.0;
      for (std::size_t q = k; q < end; ++q) {
        mv += mass[order[q]] * v[order[q]];
        ms += mass[order[q]];
      }
      const double c = ms > 0.0 ? mv / ms : v[order[k]];
      for (std::size_t q = k; q < end; ++q) v[order[q]] = c;
    }
    k = end;
  }
}

}  // namespace detail

/// Evolves the particle ODE system and records snapshots plus diagnostics at
/// the configured output times. Blow-up truncates the trajectory instead of
/// raising.
///
/// With the 1-D log kernel the interaction gradient jumps at the origin, and
/// two particles that meet stay together (their relative velocity points
/// inward from both sides). Particles that cross during a step are moved to
/// their centre of mass and then travel as one cluster with a shared
/// velocity. Masses and ordering are untouched.
template <int D>
Trajectory<D> integrate(const ParticleEnsemble<D>& e0, const ProblemSpec<D>& p, const IntegratorConfig& cfg,
                        bool with_diagnostics = true) {
  p.validate();
  cfg.validate();
  Trajectory<D> traj;
  bool clusters = false;
  if constexpr (D == 1) clusters = p.interaction.kind == InteractionPotential<1>::Kind::log1d;
  std::vector<std::size_t> order;
  std::vector<double> y0 = detail::flatten<D>(e0.positions());
  const OdeRhs rhs = [&](double, const std::vector<double>& y, std::vector<double>& dy) {
    const auto v = velocity_field(e0.with_positions(detail::unflatten<D>(y)), p);
    dy = detail::flatten<D>(v);
    if (clusters) detail::share_cluster_velocity(e0.masses(), y, dy);
  };
  const OdeObserver obs = [&](double t, const std::vector<double>& y) {
    auto snap = e0.with_positions(detail::unflatten<D>(y));
    if (with_diagnostics) traj.diagnostics.push_back(diagnose(t, snap, p));
    traj.snapshots.push_back({t, std::move(snap)});
  };
  OdeStepHook hook;
  if (clusters) {
    order = detail::position_order(y0);
    hook = [&](double, std::vector<double>& y) {
      const bool changed = detail::snap_collisions(e0.masses(), order, y);
      order = detail::position_order(y);
      return changed;
    };
  }
  traj.solver = integrate_ode(rhs, std::move(y0), cfg, obs, hook);
  traj.blew_up = !traj.solver.completed;
  traj.t_reached = traj.solver.t_reached;
  traj.stop_reason = traj.solver.stop_reason;
  return traj;
}

/// CSV columns: t, energy, dissipation, second_moment, n_particles.
inline void write_diagnostics_csv(std::ostream& os, const std::vector<DiagnosticsRow>& rows) {
  os << "t,energy,dissipation,second_moment,n_particles\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.t << ',' << r.energy << ',' << r.dissipation << ',' << r.second_moment << ',' << r.n_particles << '\n';
}

}  // namespace blobflow
