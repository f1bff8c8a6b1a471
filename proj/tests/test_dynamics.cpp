#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>

#include "blobflow/dynamics.hpp"

using namespace blobflow;

namespace {

template <int D>
ParticleEnsemble<D> random_ensemble(std::mt19937_64& rng, std::size_t n, double spread = 0.6) {
  std::normal_distribution<double> g(0.0, spread);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<Vec<D>> x(n);
  std::vector<double> m(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < D; ++k) x[i][k] = g(rng);
    m[i] = u(rng) / static_cast<double>(n);
  }
  return {x, m};
}

template <int D>
ProblemSpec<D> spec(double m, double eps) {
  ProblemSpec<D> p;
  p.m = m;
  p.mollifier = Mollifier<D>(eps);
  return p;
}

class ScopedWorkers {
 public:
  explicit ScopedWorkers(const char* n) {
    if (const char* old = std::getenv(kWorkersEnv)) old_ = old;
    setenv(kWorkersEnv, n, 1);
  }
  ~ScopedWorkers() {
    if (old_.empty())
      unsetenv(kWorkersEnv);
    else
      setenv(kWorkersEnv, old_.c_str(), 1);
  }

 private:
  std::string old_;
};

}  // namespace

TEST(Dynamics, ConvSingleParticle) {
  const Mollifier<1> moll(0.5);
  const ParticleEnsemble<1> e({Vec<1>{{0.3}}}, {1.0});
  const auto c = conv_phi_at_particles(e, moll);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], moll.phi_at_zero());
}

TEST(Dynamics, ConvTwoParticles) {
  const Mollifier<1> moll(0.5);
  const double a = 0.4;
  const ParticleEnsemble<1> e({Vec<1>{{-a}}, Vec<1>{{a}}}, {0.5, 0.5});
  const auto c = conv_phi_at_particles(e, moll);
  const double expect = 0.5 * moll.phi_at_zero() + 0.5 * moll.phi(Vec<1>{{2 * a}});
  EXPECT_NEAR(c[0], expect, 1e-15);
  EXPECT_NEAR(c[1], expect, 1e-15);
}

TEST(Dynamics, ConvPermutationEquivariant) {
  std::mt19937_64 rng(2);
  const auto e = random_ensemble<2>(rng, 9);
  std::vector<Vec<2>> x(e.positions().rbegin(), e.positions().rend());
  std::vector<double> m(e.masses().rbegin(), e.masses().rend());
  const ParticleEnsemble<2> r(x, m);
  const Mollifier<2> moll(0.3);
  const auto a = conv_phi_at_particles(e, moll), b = conv_phi_at_particles(r, moll);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(a[i], b[8 - i], 1e-14);
}

TEST(Dynamics, SingleParticleHasZeroVelocity) {
  for (double m : {1.0, 2.0, 3.0}) {
    const ParticleEnsemble<1> e({Vec<1>{{0.7}}}, {1.0});
    EXPECT_EQ(velocity_field(e, spec<1>(m, 0.5))[0][0], 0.0);
  }
}

TEST(Dynamics, TwoParticlesRepel) {
  const ParticleEnsemble<1> e({Vec<1>{{-0.25}}, Vec<1>{{0.25}}}, {0.5, 0.5});
  const auto v = velocity_field(e, spec<1>(2.0, 0.5));
  EXPECT_NEAR(v[1][0], 0.5 * 0.352065, 1e-6);
  EXPECT_NEAR(v[1][0], 0.176033, 1e-6);
  EXPECT_EQ(v[0][0], -v[1][0]);
}

TEST(Dynamics, PureDrift) {
  std::mt19937_64 rng(4);
  const auto e = random_ensemble<2>(rng, 6);
  auto p = spec<2>(2.0, 0.3);
  p.drift = DriftPotential::quadratic();
  const auto v = velocity_field(e, p, VelocityTerms{true, false, false});
  for (std::size_t i = 0; i < e.size(); ++i) {
    EXPECT_EQ(v[i][0], -e.position(i)[0]);
    EXPECT_EQ(v[i][1], -e.position(i)[1]);
  }
}

TEST(Dynamics, EnergyClosedForms) {
  const ParticleEnsemble<1> e({Vec<1>{{0.0}}}, {1.0});
  EXPECT_NEAR(discrete_energy(e, spec<1>(2.0, 0.5)), 0.398942, 1e-6);
  auto p = spec<1>(2.0, 0.5);
  p.drift = DriftPotential::quadratic();
  EXPECT_NEAR(discrete_energy(e, p), 0.398942, 1e-6);
  EXPECT_NEAR(discrete_energy(e, spec<1>(1.0, 0.5)), -0.918939, 1e-6);
}

TEST(Dynamics, InternalEnergyNonnegativeForMGreaterThanOne) {
  std::mt19937_64 rng(8);
  for (double m : {1.5, 2.0, 3.0}) {
    const auto e = random_ensemble<1>(rng, 7);
    EXPECT_GE(energy_parts(e, spec<1>(m, 0.2)).internal, 0.0);
  }
}

TEST(Dynamics, GradientCheckExamples) {
  std::mt19937_64 rng(10);
  auto p = spec<1>(2.0, 0.3);
  p.drift = DriftPotential::quadratic();
  EXPECT_LE(energy_gradient_check(random_ensemble<1>(rng, 10), p, 1e-5), 1e-6);
  const ParticleEnsemble<1> one({Vec<1>{{0.4}}}, {1.0});
  EXPECT_LE(energy_gradient_check(one, p, 1e-5), 1e-12 + 1e-9);
  EXPECT_LE(energy_gradient_check(random_ensemble<1>(rng, 5), spec<1>(1.0, 0.3), 1e-5), 1e-6);
}

TEST(Dynamics, GradientCheckAllVariants) {
  std::mt19937_64 rng(12);
  for (double m : {1.0, 2.0, 3.0}) {
    auto p1 = spec<1>(m, 0.25);
    p1.drift = DriftPotential::quadratic();
    p1.interaction = InteractionPotential<1>::log1d(0.8, 0.25);
    EXPECT_LE(energy_gradient_check(random_ensemble<1>(rng, 12), p1, 1e-5), 1e-6) << "m=" << m;
    auto p2 = spec<2>(m, 0.25);
    p2.drift = DriftPotential::quadratic();
    p2.interaction = InteractionPotential<2>::log2d(1.0 / (4 * std::numbers::pi), 0.25);
    EXPECT_LE(energy_gradient_check(random_ensemble<2>(rng, 12), p2, 1e-5), 1e-6) << "m=" << m;
  }
}

TEST(Dynamics, DissipationExamples) {
  const ParticleEnsemble<1> e({Vec<1>{{2.0}}}, {0.7});
  EXPECT_EQ(dissipation(e, spec<1>(2.0, 0.5)), 0.0);
  auto p = spec<1>(2.0, 0.5);
  p.drift = DriftPotential::quadratic();
  EXPECT_NEAR(dissipation(e, p), 4 * 0.7, 1e-15);
  std::mt19937_64 rng(13);
  const auto r = random_ensemble<2>(rng, 8);
  const auto v = velocity_field(r, spec<2>(3.0, 0.3));
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r.mass(i) * norm2(v[i]);
  EXPECT_EQ(dissipation(r, spec<2>(3.0, 0.3)), s);
}

TEST(Dynamics, MomentumConservation) {
  std::mt19937_64 rng(14);
  for (double m : {1.0, 2.0, 3.0}) {
    auto p = spec<2>(m, 0.2);
    p.interaction = InteractionPotential<2>::log2d(0.5, 0.2);
    const auto e = random_ensemble<2>(rng, 15);
    const auto v = velocity_field(e, p);
    Vec<2> s{};
    for (std::size_t i = 0; i < e.size(); ++i) s += v[i] * e.mass(i);
    EXPECT_LT(norm(s), 1e-12);
  }
}

TEST(Dynamics, MEqualsTwoIsLocalizedInteraction) {
  std::mt19937_64 rng(15);
  const auto e = random_ensemble<2>(rng, 20);
  const auto p = spec<2>(2.0, 0.3);
  const auto v = velocity_field(e, p);
  const auto& moll = p.mollifier;
  for (std::size_t i = 0; i < e.size(); ++i) {
    Vec<2> a{};
    for (std::size_t j = 0; j < e.size(); ++j) {
      if (j == i) continue;
      a += moll.phi_grad(e.position(i) - e.position(j)) * (2.0 * e.mass(j));
    }
    const Vec<2> expect = Vec<2>{} - a;
    EXPECT_EQ(v[i][0], expect[0]);
    EXPECT_EQ(v[i][1], expect[1]);
  }
}

TEST(Dynamics, SymmetricEnsembleGivesOddVelocity) {
  std::vector<Vec<1>> x;
  std::vector<double> m;
  for (double a : {-0.9, -0.4, -0.1, 0.1, 0.4, 0.9}) {
    x.push_back(Vec<1>{{a}});
    m.push_back(0.3 + std::abs(a));
  }
  const ParticleEnsemble<1> e(x, m);
  auto p = spec<1>(3.0, 0.2);
  p.interaction = InteractionPotential<1>::log1d(0.5, 0.2);
  p.drift = DriftPotential::quadratic();
  const auto v = velocity_field(e, p);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(v[i][0], -v[5 - i][0], 1e-14);
}

TEST(Dynamics, PermutationEquivariance) {
  std::mt19937_64 rng(16);
  const auto e = random_ensemble<2>(rng, 10);
  std::vector<Vec<2>> x(e.positions().rbegin(), e.positions().rend());
  std::vector<double> m(e.masses().rbegin(), e.masses().rend());
  const ParticleEnsemble<2> r(x, m);
  auto p = spec<2>(1.0, 0.3);
  p.interaction = InteractionPotential<2>::log2d(0.2, 0.3);
  const auto a = velocity_field(e, p), b = velocity_field(r, p);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_LT(norm(a[i] - b[9 - i]), 1e-13);
}

TEST(Dynamics, ResultsIndependentOfWorkerCountAndCache) {
  // Above the kernel-cache limit both streaming paths run; below it the
  // cached path runs. All must agree bit for bit with each other.
  std::mt19937_64 rng(17);
  const std::size_t n = detail::kKernelCacheLimit + 50;
  const auto big = random_ensemble<2>(rng, n, 1.0);
  auto p = spec<2>(1.0, 0.1);
  p.interaction = InteractionPotential<2>::log2d(0.3, 0.1);
  std::vector<Vec<2>> v1, v4;
  std::vector<double> c1, c4;
  {
    ScopedWorkers w("1");
    v1 = velocity_field(big, p);
    c1 = conv_phi_at_particles(big, p.mollifier);
  }
  {
    ScopedWorkers w("4");
    v4 = velocity_field(big, p);
    c4 = conv_phi_at_particles(big, p.mollifier);
  }
  for (std::size_t i = 0; i < n; ++i) {
    ASSERT_EQ(v1[i][0], v4[i][0]);
    ASSERT_EQ(v1[i][1], v4[i][1]);
    ASSERT_EQ(c1[i], c4[i]);
  }
  // Cached path versus streaming on the same small ensemble.
  const auto small = random_ensemble<2>(rng, 300);
  const auto vc = velocity_field(small, p);
  const auto cs = detail::conv_streaming(small, p.mollifier);
  const auto cc = conv_phi_at_particles(small, p.mollifier);
  for (std::size_t i = 0; i < small.size(); ++i) ASSERT_EQ(cs[i], cc[i]);
  ScopedWorkers w("3");
  const auto vc3 = velocity_field(small, p);
  for (std::size_t i = 0; i < small.size(); ++i) ASSERT_EQ(vc[i][0], vc3[i][0]);
}

TEST(Dynamics, RejectsSubLinearDiffusion) {
  const ParticleEnsemble<1> e({Vec<1>{{0.0}}}, {1.0});
  EXPECT_THROW(velocity_field(e, spec<1>(0.5, 0.5)), ConfigError);
  EXPECT_THROW(discrete_energy(e, spec<1>(0.5, 0.5)), ConfigError);
}

TEST(Dynamics, NonFiniteVelocityNamesParticle) {
  const ParticleEnsemble<1> e({Vec<1>{{0.0}}, Vec<1>{{1e300}}}, {1.0, 1.0});
  auto p = spec<1>(2.0, 0.5);
  p.drift = DriftPotential::quadratic();
  p.interaction = InteractionPotential<1>::log1d(1e308, 0.5);
  try {
    velocity_field(e, p);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& err) {
    EXPECT_NE(std::string(err.what()).find("particle"), std::string::npos);
  }
}
