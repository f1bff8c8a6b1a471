#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "blobflow/mollifier.hpp"
#include "blobflow/potentials.hpp"
#include "oracles.hpp"

using namespace blobflow;

TEST(Drift, QuadraticGradient) {
  const auto v = DriftPotential::quadratic();
  EXPECT_EQ(v.grad(Vec<1>{{2.0}})[0], 2.0);
  const auto g = v.grad(Vec<2>{{1.0, -3.0}});
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[1], -3.0);
  EXPECT_EQ(v.value(Vec<2>{{1.0, -3.0}}), 5.0);
}

TEST(Drift, NoneIsZero) {
  const auto v = DriftPotential::none();
  EXPECT_EQ(v.grad(Vec<1>{{2.0}})[0], 0.0);
  EXPECT_EQ(v.value(Vec<2>{{4.0, 1.0}}), 0.0);
}

TEST(Drift, GradientMatchesFiniteDifferences) {
  const auto v = DriftPotential::quadratic();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 20; ++t) {
    const Vec<2> x{{u(rng), u(rng)}};
    for (int k = 0; k < 2; ++k) {
      Vec<2> p = x, m = x;
      p[k] += 1e-4;
      m[k] -= 1e-4;
      const double fd = (v.value(p) - v.value(m)) / 2e-4;
      EXPECT_NEAR(v.grad(x)[k], fd, 1e-8 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Interaction, Log1dGradient) {
  const auto w = InteractionPotential<1>::log1d(1.5, 0.1);
  EXPECT_DOUBLE_EQ(w.grad(Vec<1>{{2.0}})[0], 1.5);
  EXPECT_EQ(w.grad(Vec<1>{{0.0}})[0], 0.0);
  EXPECT_DOUBLE_EQ(w.grad(Vec<1>{{0.05}})[0], 2.0 * 1.5 / 0.1);
  EXPECT_DOUBLE_EQ(w.grad(Vec<1>{{-0.05}})[0], -2.0 * 1.5 / 0.1);
}

TEST(Interaction, Log2dAtOrigin) {
  const auto w = InteractionPotential<2>::log2d(1.0 / (4 * std::numbers::pi), 0.1);
  const auto g = w.grad(Vec<2>{{0.0, 0.0}});
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_TRUE(std::isfinite(w.value(Vec<2>{{0.0, 0.0}})));
}

TEST(Interaction, GradientOddnessExact) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 0.3);
  const auto w1 = InteractionPotential<1>::log1d(0.7, 0.05);
  const auto w2 = InteractionPotential<2>::log2d(0.3, 0.05);
  for (int t = 0; t < 500; ++t) {
    const Vec<1> x{{g(rng)}};
    EXPECT_EQ((w1.grad(x) + w1.grad(-x))[0], 0.0);
    const Vec<2> y{{g(rng), g(rng)}};
    const auto s = w2.grad(y) + w2.grad(-y);
    EXPECT_EQ(s[0], 0.0);
    EXPECT_EQ(s[1], 0.0);
  }
}

TEST(Interaction, GradientBounds) {
  const double chi = 1.5, eps = 0.1;
  const auto w = InteractionPotential<1>::log1d(chi, eps);
  for (double x = -1.0; x <= 1.0; x += 0.001) EXPECT_LE(std::abs(w.grad(Vec<1>{{x}})[0]), 2 * chi / eps + 1e-12);
  const auto w2 = InteractionPotential<2>::log2d(chi, eps);
  for (double r = 1e-8; r < 2.0; r *= 1.3) EXPECT_TRUE(std::isfinite(w2.grad(Vec<2>{{r, 0.0}})[0]));
}

TEST(Interaction, Log2dMatchesNumericConvolution) {
  const double chi = 1.0 / (4 * std::numbers::pi), eps = 0.2;
  const auto w = InteractionPotential<2>::log2d(chi, eps);
  const Mollifier<2> moll(eps);
  for (const Vec<2> x : {Vec<2>{{0.3, 0.0}}, Vec<2>{{0.5, -0.4}}, Vec<2>{{-1.1, 0.7}}}) {
    // (grad W * phi)(x) = int grad W(y) phi(x - y) dy in polar coordinates
    // about y = 0, where the 1/r singularity cancels the Jacobian.
    Vec<2> num{};
    for (int k = 0; k < 2; ++k) {
      num[k] = oracle::simpson(
          [&](double r) {
            return oracle::simpson(
                [&](double th) {
                  const Vec<2> e{{std::cos(th), std::sin(th)}};
                  return 2 * chi * e[k] * moll.phi(x - e * r);
                },
                0.0, 2 * std::numbers::pi, 200);
          },
          0.0, norm(x) + 14 * eps, 1200);
    }
    const auto cf = w.grad(x);
    EXPECT_NEAR(cf[0], num[0], 1e-4 * std::max(1.0, norm(cf)));
    EXPECT_NEAR(cf[1], num[1], 1e-4 * std::max(1.0, norm(cf)));
  }
}

TEST(Interaction, Log2dApproachesBareKernel) {
  const double chi = 0.4, eps = 0.05;
  const auto w = InteractionPotential<2>::log2d(chi, eps);
  for (double r = 10 * eps; r < 3.0; r *= 1.5) {
    const Vec<2> x{{r * 0.8, -r * 0.6}};
    const auto g = w.grad(x);
    const Vec<2> bare = x * (2 * chi / norm2(x));
    EXPECT_LT(norm(g - bare) / norm(bare), 1e-4);
    EXPECT_NEAR(w.value(x), 2 * chi * std::log(r), 1e-4 * std::abs(2 * chi * std::log(r)) + 1e-12);
  }
}

TEST(Interaction, ValuesOutsideCutoff) {
  const auto w = InteractionPotential<1>::log1d(1.5, 0.1);
  EXPECT_EQ(w.value(Vec<1>{{1.0}}), 0.0);
  EXPECT_NEAR(w.value(Vec<1>{{std::numbers::e}}), 3.0, 1e-14);
  EXPECT_NEAR(w.value(Vec<1>{{-std::numbers::e}}), 3.0, 1e-14);
}

TEST(Interaction, ValueIsAntiderivativeOfGradient) {
  // The value is continuous at the cutoff and its derivative is the gradient,
  // which keeps the discrete energy consistent with the velocity field.
  const auto w = InteractionPotential<1>::log1d(1.5, 0.1);
  EXPECT_NEAR(w.value(Vec<1>{{0.1 - 1e-13}}), w.value(Vec<1>{{0.1}}), 1e-11);
  EXPECT_DOUBLE_EQ(w.value(Vec<1>{{0.0}}), 3.0 * (std::log(0.1) - 1.0));
  for (double x : {-0.5, -0.08, -0.03, 0.02, 0.07, 0.15, 0.9}) {
    const double fd = (w.value(Vec<1>{{x + 1e-6}}) - w.value(Vec<1>{{x - 1e-6}})) / 2e-6;
    EXPECT_NEAR(w.grad(Vec<1>{{x}})[0], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
  const auto w2 = InteractionPotential<2>::log2d(0.3, 0.1);
  for (const Vec<2> x : {Vec<2>{{0.01, 0.02}}, Vec<2>{{0.2, -0.1}}, Vec<2>{{-0.7, 0.9}}, Vec<2>{{3.0, 0.2}}}) {
    for (int k = 0; k < 2; ++k) {
      Vec<2> p = x, m = x;
      p[k] += 1e-6;
      m[k] -= 1e-6;
      const double fd = (w2.value(p) - w2.value(m)) / 2e-6;
      EXPECT_NEAR(w2.grad(x)[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Interaction, EinSeriesMatchesExponentialIntegral) {
  for (double u : {0.5, 1.0, 1.9, 2.1, 5.0, 30.0}) {
    const double ref = -std::expint(-u) + std::log(u) + std::numbers::egamma;
    EXPECT_NEAR(ein(u), ref, 1e-13 * std::max(1.0, std::abs(ref)));
  }
  EXPECT_EQ(ein(0.0), 0.0);
}

TEST(Interaction, RejectsNonPositiveCutoff) {
  EXPECT_THROW(InteractionPotential<1>::log1d(1.0, 0.0), ConfigError);
  EXPECT_THROW(InteractionPotential<2>::log2d(1.0, -1.0), ConfigError);
}
