#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "blobflow/integrator.hpp"

using namespace blobflow;

namespace {

ProblemSpec<1> drift_only() {
  ProblemSpec<1> p;
  p.m = 2.0;
  p.drift = DriftPotential::quadratic();
  p.mollifier = Mollifier<1>(0.5);
  return p;
}

double rk4_drift_error(double dt) {
  // A single particle feels only the drift, so v = -x exactly.
  const ParticleEnsemble<1> e({Vec<1>{{1.0}}}, {1.0});
  IntegratorConfig cfg;
  cfg.scheme = Rk4Fixed{dt};
  cfg.t_final = 1.0;
  const auto tr = integrate(e, drift_only(), cfg, false);
  return std::abs(tr.snapshots.back().ensemble.position(0)[0] - std::exp(-1.0));
}

}  // namespace

TEST(Integrator, ScalarDecay) {
  IntegratorConfig cfg;
  cfg.scheme = Rk45Adaptive{1e-10, 1e-14, 1e-3};
  cfg.t_final = 1.0;
  double y_end = 0.0;
  const auto out = integrate_ode([](double, const std::vector<double>& y, std::vector<double>& dy) { dy = {-y[0]}; },
                                 {1.0}, cfg, [&](double, const std::vector<double>& y) { y_end = y[0]; });
  EXPECT_TRUE(out.completed);
  EXPECT_NEAR(y_end, 0.367879441171442, 1e-8 * 0.367879);
}

TEST(Integrator, ZeroVelocityKeepsPositions) {
  const ParticleEnsemble<2> e({Vec<2>{{0.3, -0.2}}}, {1.0});
  ProblemSpec<2> p;
  p.mollifier = Mollifier<2>(0.1);
  IntegratorConfig cfg;
  cfg.t_final = 2.0;
  cfg.record_times = {0.5, 1.0, 1.5};
  const auto tr = integrate(e, p, cfg);
  ASSERT_EQ(tr.snapshots.size(), 5u);
  for (const auto& s : tr.snapshots) {
    EXPECT_EQ(s.ensemble.position(0)[0], 0.3);
    EXPECT_EQ(s.ensemble.position(0)[1], -0.2);
  }
}

TEST(Integrator, PureDriftMatchesExponential) {
  const ParticleEnsemble<1> e({Vec<1>{{1.7}}}, {1.0});
  IntegratorConfig cfg;
  cfg.t_final = 1.0;
  const auto tr = integrate(e, drift_only(), cfg);
  EXPECT_NEAR(tr.snapshots.back().ensemble.position(0)[0], 1.7 * std::exp(-1.0), 1e-6);
}

TEST(Integrator, RecordTimesLandExactly) {
  const ParticleEnsemble<1> e({Vec<1>{{1.0}}, Vec<1>{{-0.5}}}, {0.5, 0.5});
  IntegratorConfig cfg;
  cfg.t_final = 0.3;
  cfg.record_times = {0.0, 0.05, 0.1, 0.2};
  const auto tr = integrate(e, drift_only(), cfg);
  const std::vector<double> expect{0.0, 0.05, 0.1, 0.2, 0.3};
  ASSERT_EQ(tr.snapshots.size(), expect.size());
  ASSERT_EQ(tr.diagnostics.size(), expect.size());
  for (std::size_t k = 0; k < expect.size(); ++k) {
    EXPECT_EQ(tr.snapshots[k].t, expect[k]);
    EXPECT_EQ(tr.diagnostics[k].t, expect[k]);
    EXPECT_TRUE(tr.snapshots[k].ensemble.shares_masses_with(e));
  }
}

TEST(Integrator, StepRk4ZeroStep) {
  const ParticleEnsemble<1> e({Vec<1>{{1.0}}, Vec<1>{{-0.5}}}, {0.5, 0.5});
  const auto s = step_rk4(e, drift_only(), 0.0);
  EXPECT_EQ(s.position(0)[0], 1.0);
  EXPECT_EQ(s.position(1)[0], -0.5);
}

TEST(Integrator, StepRk4MatchesTaylorPolynomialOnLinearField) {
  const ParticleEnsemble<1> e({Vec<1>{{1.3}}}, {1.0});
  for (double dt : {0.1, 0.37, 1.0}) {
    const double taylor = 1.3 * (1 - dt + dt * dt / 2 - dt * dt * dt / 6 + dt * dt * dt * dt / 24);
    EXPECT_NEAR(step_rk4(e, drift_only(), dt).position(0)[0], taylor, 1e-15);
  }
}

TEST(Integrator, StepRk4KeepsSymmetry) {
  ProblemSpec<1> p;
  p.m = 2.0;
  p.mollifier = Mollifier<1>(0.3);
  p.interaction = InteractionPotential<1>::log1d(0.4, 0.3);
  auto e = ParticleEnsemble<1>({Vec<1>{{-0.2}}, Vec<1>{{0.2}}}, {0.5, 0.5});
  for (int k = 0; k < 25; ++k) {
    e = step_rk4(e, p, 0.01);
    EXPECT_EQ(e.position(0)[0], -e.position(1)[0]);
  }
}

TEST(Integrator, Rk4IsFourthOrder) {
  const double ratio = rk4_drift_error(0.1) / rk4_drift_error(0.05);
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
}

TEST(Integrator, EnergyNonIncreasing) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 0.5);
  std::vector<Vec<1>> x(30);
  std::vector<double> m(30, 1.0 / 30);
  for (auto& v : x) v[0] = g(rng);
  const ParticleEnsemble<1> e(x, m);
  ProblemSpec<1> p;
  p.m = 3.0;
  p.drift = DriftPotential::quadratic();
  p.mollifier = Mollifier<1>(0.1);
  IntegratorConfig cfg;
  cfg.t_final = 0.5;
  for (int k = 1; k < 20; ++k) cfg.record_times.push_back(0.025 * k);
  const auto tr = integrate(e, p, cfg);
  const double slack = 1e-8 * (1 + std::abs(tr.diagnostics[0].energy));
  for (std::size_t k = 1; k < tr.diagnostics.size(); ++k)
    EXPECT_LE(tr.diagnostics[k].energy, tr.diagnostics[k - 1].energy + slack);
}

TEST(Integrator, StepUnderflowSignalsBlowUp) {
  IntegratorConfig cfg;
  cfg.t_final = 2.0;
  const auto out = integrate_ode(
      [](double, const std::vector<double>& y, std::vector<double>& dy) { dy = {y[0] * y[0]}; }, {1.0}, cfg,
      [](double, const std::vector<double>&) {});
  EXPECT_FALSE(out.completed);
  EXPECT_NEAR(out.t_reached, 1.0, 1e-3);
  EXPECT_NE(out.stop_reason.find("underflow"), std::string::npos);
}

TEST(Integrator, ValidatesConfig) {
  IntegratorConfig cfg;
  cfg.t_final = 1.0;
  cfg.record_times = {0.5, 2.0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.record_times = {0.6, 0.2};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.record_times = {};
  cfg.scheme = Rk4Fixed{0.0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.scheme = Rk45Adaptive{-1.0};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Integrator, DiagnosticsCsvHeader) {
  std::ostringstream os;
  write_diagnostics_csv(os, {DiagnosticsRow{0.0, 1.0, 2.0, 3.0, 4}});
  EXPECT_EQ(os.str(), "t,energy,dissipation,second_moment,n_particles\n0,1,2,3,4\n");
}

TEST(Integrator, SnapCollisionsMovesCrossedRunsToCentreOfMass) {
  const std::vector<double> mass{1.0, 2.0, 3.0, 4.0};
  const auto order = detail::position_order({0.0, 1.0, 2.0, 3.0});
  std::vector<double> y{0.0, 1.0, 2.0, 3.0};
  EXPECT_FALSE(detail::snap_collisions(mass, order, y));
  y = {0.0, 1.5, 1.4, 3.0};
  EXPECT_TRUE(detail::snap_collisions(mass, order, y));
  const double c = (1.5 * 2.0 + 1.4 * 3.0) / 5.0;
  EXPECT_EQ(y, (std::vector<double>{0.0, c, c, 3.0}));
  // A run of three, where the third only passes the first of the pair.
  y = {0.0, 1.5, 1.2, 1.3};
  EXPECT_TRUE(detail::snap_collisions(mass, order, y));
  EXPECT_EQ(y[1], y[2]);
  EXPECT_EQ(y[2], y[3]);
  EXPECT_NEAR(y[1], (1.5 * 2.0 + 1.2 * 3.0 + 1.3 * 4.0) / 9.0, 1e-15);
  // An existing cluster that did not cross anything is left alone.
  y = {0.0, 1.0, 1.0, 3.0};
  EXPECT_FALSE(detail::snap_collisions(mass, detail::position_order(y), y));
}

TEST(Integrator, ClusterSharesMassWeightedVelocity) {
  std::vector<double> v{1.0, 7.0, 4.0};
  detail::share_cluster_velocity({1.0, 1.0, 3.0}, {0.5, 0.2, 0.5}, v);
  EXPECT_EQ(v, (std::vector<double>{3.25, 7.0, 3.25}));
}

TEST(Integrator, Log1dCollisionFormsClusterAndConservesMomentum) {
  const ParticleEnsemble<1> e({Vec<1>{{-0.04}}, Vec<1>{{0.06}}, Vec<1>{{10.0}}}, {0.6, 0.4, 0.01});
  ProblemSpec<1> p;
  p.m = 2.0;
  p.mollifier = Mollifier<1>(0.3);
  p.interaction = InteractionPotential<1>::log1d(5.0, 0.05);
  IntegratorConfig cfg;
  cfg.t_final = 0.2;
  cfg.record_times = {0.1};
  const auto tr = integrate(e, p, cfg);
  EXPECT_FALSE(tr.blew_up);
  const auto& last = tr.snapshots.back().ensemble;
  ASSERT_EQ(last.size(), 3u);
  EXPECT_EQ(last.position(0)[0], last.position(1)[0]);
  EXPECT_LT(last.position(1)[0], last.position(2)[0]);
  for (const auto& s : tr.snapshots) {
    EXPECT_EQ(s.ensemble.masses(), e.masses());
    EXPECT_NEAR(s.ensemble.first_moment()[0], e.first_moment()[0], 1e-12);
  }
}
