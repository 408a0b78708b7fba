#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "covfun/theory.hpp"

namespace covfun {
namespace {

// Oracle: mass of the continuous part via x = a + (b - a)(1 - cos t)/2, which turns the
// square-root edges into a smooth periodic integrand; plain midpoint rule in t.
double mp_mass_oracle(double gamma, double upto, int points = 200'000) {
  const double a = (1 - std::sqrt(gamma)) * (1 - std::sqrt(gamma));
  const double b = (1 + std::sqrt(gamma)) * (1 + std::sqrt(gamma));
  const double half = 0.5 * (b - a);
  const double end = std::acos(std::clamp(1 - (std::min(upto, b) - a) / half, -1.0, 1.0));
  const double h = end / points;
  double total = 0.0;
  for (int i = 0; i < points; ++i) {
    const double t = (i + 0.5) * h;
    const double x = a + half * (1 - std::cos(t));
    const double s = std::sin(t);
    total += half * half * s * s / (2 * std::numbers::pi * gamma * x) * h;
  }
  return total;
}

double mp_quantile(const MarchenkoPastur& law, double p) {
  double lo = 0.0;
  double hi = law.upper();
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (law.cdf(mid, 1e-11) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(EffectiveRank, IdentityIsDimension) {
  for (Index d : {1, 7, 300}) EXPECT_DOUBLE_EQ(effective_rank(CovarianceModel::identity(d)), static_cast<double>(d));
}

TEST(EffectiveRank, SmallSpectrum) {
  EXPECT_DOUBLE_EQ(effective_rank(std::vector<double>{2.0, 1.0, 1.0}), 2.0);
  EXPECT_DOUBLE_EQ(effective_rank_of_square(CovarianceModel({2.0, 1.0, 1.0})), 1.5);
}

TEST(EffectiveRank, InverseSquareDecayApproachesZeta2) {
  const auto model = CovarianceModel::poly_decay(10'000, 2.0);
  long double partial = 0.0L;
  for (int k = 10'000; k >= 1; --k) partial += 1.0L / (static_cast<long double>(k) * k);
  EXPECT_NEAR(effective_rank(model), static_cast<double>(partial), 1e-12);
  EXPECT_NEAR(effective_rank(model), std::numbers::pi * std::numbers::pi / 6.0, 1e-3);
}

TEST(EffectiveRank, ScaleInvariantAndBoundedByRank) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(20));
    std::vector<double> v;
    for (int k = 0; k < d; ++k) v.push_back(rng.uniform() < 0.2 ? 0.0 : rng.uniform());
    v[0] = 0.5 + rng.uniform();
    const double r = effective_rank(v);
    const double c = 0.01 + 100 * rng.uniform();
    std::vector<double> scaled;
    for (double x : v) scaled.push_back(c * x);
    EXPECT_NEAR(effective_rank(scaled), r, 1e-12 * r);
    const auto rank = std::count_if(v.begin(), v.end(), [](double x) { return x > 0.0; });
    EXPECT_GE(r, 1.0 - 1e-15);
    EXPECT_LE(r, static_cast<double>(rank) + 1e-12);
  }
  EXPECT_THROW(effective_rank(std::vector<double>{0.0, 0.0}), InvalidArgument);
}

TEST(GaussianLimitStd, ClosedForms) {
  EXPECT_DOUBLE_EQ(gaussian_limit_std(builtin("identity"), CovarianceModel::identity(9)), 3.0);
  // lambda f'(lambda) = 2 lambda^2 gives (8, 2).
  EXPECT_DOUBLE_EQ(gaussian_limit_std(builtin("square"), CovarianceModel({2.0, 1.0})), std::sqrt(68.0));
  EXPECT_NEAR(gaussian_limit_std(builtin("log1p"), CovarianceModel::identity(4)), 1.0, 1e-15);
}

TEST(GaussianLimitStd, LinearInScaleOfIdentityFunction) {
  const auto base = CovarianceModel::poly_decay(12, 0.7);
  const double s = gaussian_limit_std(builtin("identity"), base);
  for (double c : {0.5, 2.0, 10.0}) {
    std::vector<double> scaled;
    for (double v : base.eigenvalues()) scaled.push_back(c * v);
    EXPECT_NEAR(gaussian_limit_std(builtin("identity"), scaled), c * s, 1e-12 * c * s);
  }
}

TEST(RateBudget, HandComputedTerms) {
  const auto b = rate_budget(builtin("square"), CovarianceModel::identity(4), 100, 2);
  EXPECT_NEAR(b.main_term, 0.4, 1e-15);
  EXPECT_NEAR(b.linear_residual, 0.04, 1e-15);
  EXPECT_NEAR(b.bias_term, 4.0 * 0.2 * 0.2 * 0.2, 1e-15);
  EXPECT_NEAR(b.total, b.main_term + b.linear_residual + b.bias_term, 1e-15);
  EXPECT_THROW(rate_budget(builtin("square"), CovarianceModel::identity(4), 100, 1), InvalidArgument);
}

TEST(RateBudget, BiasTermShrinksWithLevels) {
  const auto model = CovarianceModel::identity(50);
  const auto f = builtin("log1p");
  double previous = std::numeric_limits<double>::infinity();
  for (int m = 2; m <= 6; ++m) {
    const auto b = rate_budget(f, model, 1000, m);
    EXPECT_LT(b.bias_term, previous);
    previous = b.bias_term;
  }
}

TEST(MarchenkoPastur, SupportEdges) {
  const MarchenkoPastur unit(1.0);
  EXPECT_EQ(unit.lower(), 0.0);
  EXPECT_EQ(unit.upper(), 4.0);
  EXPECT_EQ(unit.density(4.0), 0.0);
  EXPECT_EQ(unit.atom_at_zero(), 0.0);
  const MarchenkoPastur quarter(0.25);
  EXPECT_DOUBLE_EQ(quarter.lower(), 0.25);
  EXPECT_DOUBLE_EQ(quarter.upper(), 2.25);
  EXPECT_EQ(quarter.density(0.2), 0.0);
  EXPECT_EQ(quarter.cdf(0.2), 0.0);
  EXPECT_DOUBLE_EQ(MarchenkoPastur(2.0).atom_at_zero(), 0.5);
  EXPECT_THROW(MarchenkoPastur(0.0), InvalidArgument);
}

TEST(MarchenkoPastur, TotalMassIsOne) {
  for (double gamma : {0.1, 0.5, 1.0, 2.0}) {
    const MarchenkoPastur law(gamma);
    EXPECT_NEAR(law.cdf(law.upper() + 1.0), 1.0, 1e-6) << gamma;
    EXPECT_NEAR(law.atom_at_zero() + mp_mass_oracle(gamma, law.upper()), 1.0, 1e-9) << gamma;
  }
}

TEST(MarchenkoPastur, CdfMatchesIndependentQuadrature) {
  for (double gamma : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    const MarchenkoPastur law(gamma);
    for (int i = 1; i < 20; ++i) {
      const double x = law.lower() + (law.upper() - law.lower()) * i / 20.0;
      EXPECT_NEAR(law.cdf(x), law.atom_at_zero() + mp_mass_oracle(gamma, x), 1e-6) << gamma << " " << x;
    }
  }
}

TEST(MarchenkoPastur, MonotoneCdfNonnegativeDensity) {
  for (double gamma : {0.3, 1.0, 3.0}) {
    const MarchenkoPastur law(gamma);
    double previous = 0.0;
    for (int i = 0; i <= 400; ++i) {
      const double x = -0.1 + (law.upper() + 0.2) * i / 400.0;
      EXPECT_GE(law.density(x), 0.0);
      const double f = law.cdf(x);
      EXPECT_GE(f, previous - 1e-12);
      EXPECT_LE(f, 1.0 + 1e-6);
      previous = f;
    }
  }
}

TEST(MarchenkoPastur, FirstTwoMoments) {
  // Mean 1 and second moment 1 + gamma, from integrating 1 - F and 2x(1 - F).
  for (double gamma : {0.25, 1.0, 2.0}) {
    const MarchenkoPastur law(gamma);
    const double mean = adaptive_simpson([&](double x) { return 1.0 - law.cdf(x, 1e-11); }, 0.0, law.upper(), 1e-8, 20);
    const double second =
        adaptive_simpson([&](double x) { return 2.0 * x * (1.0 - law.cdf(x, 1e-11)); }, 0.0, law.upper(), 1e-8, 20);
    EXPECT_NEAR(mean, 1.0, 1e-5) << gamma;
    EXPECT_NEAR(second, 1.0 + gamma, 1e-5) << gamma;
  }
}

TEST(EsdKsDistance, ExactQuantilesAreClose) {
  const MarchenkoPastur law(0.5);
  const int d = 200;
  std::vector<double> eig;
  for (int i = 0; i < d; ++i) eig.push_back(mp_quantile(law, (i + 0.5) / d));
  EXPECT_LE(esd_ks_distance(eig, law), 0.5 / d + 1e-6);
}

TEST(EsdKsDistance, AtomAndPointMass) {
  const MarchenkoPastur law(2.0);
  EXPECT_NEAR(esd_ks_distance(std::vector<double>(10, 0.0), law), 0.5, 1e-6);
  EXPECT_NEAR(esd_ks_distance(std::vector<double>{100.0}, MarchenkoPastur(0.5)), 1.0, 1e-6);
}

TEST(EsdKsDistance, SampleSpectrumNearLimit) {
  const Index d = 200;
  const Index n = 400;
  const Vector eig = sym_eigenvalues(sample_covariance(sample_gaussian(CovarianceModel::identity(d), n, 12)));
  const std::vector<double> v(eig.data(), eig.data() + eig.size());
  EXPECT_LE(esd_ks_distance(v, MarchenkoPastur(0.5)), 0.08);
  EXPECT_GE(esd_ks_distance(v, MarchenkoPastur(0.1)), 0.1);
}

TEST(AdaptiveSimpson, KnownIntegrals) {
  EXPECT_NEAR(adaptive_simpson([](double x) { return std::sin(x); }, 0.0, std::numbers::pi), 2.0, 1e-9);
  EXPECT_NEAR(adaptive_simpson([](double x) { return x * x * x; }, -1.0, 3.0), 20.0, 1e-12);
  EXPECT_NEAR(adaptive_simpson([](double x) { return std::sqrt(x); }, 0.0, 1.0, 1e-10), 2.0 / 3.0, 1e-6);
  EXPECT_EQ(adaptive_simpson([](double) { return 1.0; }, 2.0, 2.0), 0.0);
}

}  // namespace
}  // namespace covfun
