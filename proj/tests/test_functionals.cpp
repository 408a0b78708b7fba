#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "covfun/functionals.hpp"
#include "covfun/linalg.hpp"

namespace covfun {
namespace {

std::vector<double> test_grid(double lo, double hi, int points) {
  std::vector<double> g;
  for (int i = 0; i < points; ++i) g.push_back(lo + (hi - lo) * i / (points - 1));
  return g;
}

TEST(Builtin, IdentityDerivatives) {
  const auto f = builtin("identity");
  EXPECT_EQ(f(2.5), 2.5);
  EXPECT_EQ(f.derivative(1, 7.0), 1.0);
  EXPECT_EQ(f.derivative(2, 7.0), 0.0);
  EXPECT_EQ(f.linear_slope(), 1.0);
}

TEST(Builtin, Log1pAtZero) {
  const auto f = builtin("log1p");
  EXPECT_EQ(f(0.0), 0.0);
  EXPECT_DOUBLE_EQ(f.derivative(1, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(f.derivative(2, 0.0), -1.0);
  EXPECT_DOUBLE_EQ(f.derivative(3, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(f.lipschitz_first_derivative(), 1.0);
}

TEST(Builtin, SquareAtThree) {
  const auto f = builtin("square");
  EXPECT_EQ(f(3.0), 9.0);
  EXPECT_EQ(f.derivative(1, 3.0), 6.0);
  EXPECT_EQ(f.derivative(2, 3.0), 2.0);
  EXPECT_EQ(f.derivative(3, 3.0), 0.0);
  EXPECT_EQ(f.lipschitz_first_derivative(), 2.0);
}

TEST(Builtin, RationalAndSine) {
  const auto r = builtin("rational");
  EXPECT_DOUBLE_EQ(r(1.0), 0.5);
  EXPECT_DOUBLE_EQ(r.derivative(1, 1.0), 0.25);
  EXPECT_DOUBLE_EQ(r.lipschitz_first_derivative(), 2.0);
  const auto s = builtin("scaled_sine:2");
  EXPECT_DOUBLE_EQ(s(1.0), std::sin(2.0) / 2.0);
  EXPECT_DOUBLE_EQ(s.derivative(3, 1.0), -4.0 * std::cos(2.0));
}

TEST(Builtin, AllBuiltinsVanishAtZeroAndHaveConsistentDerivatives) {
  const auto grid = test_grid(0.05, 6.0, 41);
  for (const char* name : {"identity", "square", "cube", "log1p", "rational", "scaled_sine", "scaled_sine:0.3", "bump", "bump:1.5:0.7"}) {
    const auto f = builtin(name);
    EXPECT_LE(std::abs(f(0.0)), 1e-12) << name;
    EXPECT_GE(f.max_order(), 6) << name;
    EXPECT_LE(derivative_consistency_error(f, grid), 1e-4) << name;
  }
}

TEST(Builtin, DeclaredBoundsHoldOnGrid) {
  const auto grid = test_grid(0.0, 10.0, 2001);
  for (const char* name : {"identity", "square", "cube", "log1p", "rational", "scaled_sine:0.7", "bump:2:0.8"}) {
    const auto f = builtin(name);
    for (int j = 0; j <= f.max_order(); ++j) {
      for (double x : grid) {
        EXPECT_LE(std::abs(f.derivative(j, x)), f.sup_derivative(j) * (1 + 1e-12) + 1e-12) << name << " order " << j;
      }
    }
  }
}

TEST(Builtin, UnknownNameAndBadParameters) {
  EXPECT_THROW(builtin("tanh"), InvalidArgument);
  EXPECT_THROW(builtin("square:2"), InvalidArgument);
  EXPECT_THROW(builtin("scaled_sine:abc"), InvalidArgument);
  EXPECT_THROW(builtin("scaled_sine:-1"), InvalidArgument);
  EXPECT_THROW(builtin("identity").derivative(9, 1.0), InvalidArgument);
}

TEST(TauF, ClosedForms) {
  EXPECT_DOUBLE_EQ(tau_f(builtin("identity"), std::vector<double>{2.0, 1.0, 0.5}), 3.5);
  EXPECT_DOUBLE_EQ(tau_f(builtin("square"), std::vector<double>{2.0, 1.0}), 5.0);
  EXPECT_NEAR(tau_f(builtin("log1p"), std::vector<double>{1.0, 1.0, 1.0}), 2.0794415416798357, 1e-15);
  EXPECT_THROW(tau_f(builtin("identity"), std::vector<double>{-1.0}), InvalidArgument);
}

TEST(TauF, LinearInTheFunction) {
  const auto f = builtin("log1p");
  const auto g = builtin("rational");
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> spectrum;
    for (int k = 0; k < 7; ++k) spectrum.push_back(3.0 * rng.uniform());
    const double a = rng.normal();
    const double b = rng.normal();
    const auto h = TestFunction::linear_combination(a, f, b, g);
    const double lhs = tau_f(h, spectrum);
    const double rhs = a * tau_f(f, spectrum) + b * tau_f(g, spectrum);
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(TauF, InvariantUnderChangeOfBasis) {
  for (const char* name : {"square", "log1p", "rational", "bump"}) {
    const auto f = builtin(name);
    const auto plain = CovarianceModel::poly_decay(9, 0.8);
    const double expected = tau_f(f, plain.eigenvalues());
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto rotated = plain.with_random_basis(seed);
      const Vector eig = sym_eigenvalues(rotated.matrix());
      const double got = tau_f(f, std::span<const double>(eig.data(), static_cast<std::size_t>(eig.size())));
      EXPECT_NEAR(got, expected, 1e-8) << name;
    }
  }
}

TEST(DefaultGrid, SingleMemberIsSine) {
  const auto grid = default_grid(2, 1, 0);
  ASSERT_EQ(grid.members.size(), 1u);
  EXPECT_DOUBLE_EQ(grid.members[0](1.3), std::sin(1.3));
}

TEST(DefaultGrid, MembersSatisfyDerivativeBounds) {
  const auto xs = test_grid(0.0, 12.0, 4001);
  for (int m : {1, 2, 4, 6}) {
    const auto grid = default_grid(m, 9, 31);
    for (const auto& f : grid.members) {
      EXPECT_LE(max_derivative_on_grid(f, m, xs), 1.0 + 1e-9) << f.name();
      EXPECT_LE(std::abs(f(0.0)), 1e-12);
    }
  }
}

TEST(DefaultGrid, DistinctAndDeterministic) {
  const auto a = default_grid(4, 8, 123);
  const auto b = default_grid(4, 8, 123);
  ASSERT_EQ(a.members.size(), 8u);
  std::set<std::string> names;
  for (std::size_t i = 0; i < a.members.size(); ++i) {
    EXPECT_EQ(a.members[i].name(), b.members[i].name());
    names.insert(a.members[i].name());
  }
  EXPECT_EQ(names.size(), 8u);
  EXPECT_NE(default_grid(4, 8, 124).members[1].name(), a.members[1].name());
}

TEST(DefaultGrid, CsvRoundTripPreservesValues) {
  const auto grid = default_grid(3, 6, 9);
  std::stringstream csv;
  write_grid_csv(grid, csv);
  const auto back = read_grid_csv(csv, 3);
  ASSERT_EQ(back.members.size(), grid.members.size());
  for (std::size_t i = 0; i < grid.members.size(); ++i) {
    for (double x : {0.3, 1.7, 4.2}) EXPECT_EQ(back.members[i](x), grid.members[i](x));
  }
}

TEST(DefaultGrid, RejectsBadArguments) {
  EXPECT_THROW(default_grid(0, 3, 1), InvalidArgument);
  EXPECT_THROW(default_grid(2, 0, 1), InvalidArgument);
}

}  // namespace
}  // namespace covfun
