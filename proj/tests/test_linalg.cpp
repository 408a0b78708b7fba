#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "covfun/linalg.hpp"
#include "covfun/parallel.hpp"

namespace covfun {
namespace {

Vector column_variances(const SampleSet& s) {
  return s.data().colwise().squaredNorm().transpose() / static_cast<double>(s.n());
}

TEST(SampleGaussian, ZeroCovarianceGivesZeroData) {
  const CovarianceModel zero(std::vector<double>(3, 0.0));
  const auto s = sample_gaussian(zero, 5, 1);
  EXPECT_EQ(s.n(), 5);
  EXPECT_EQ(s.dim(), 3);
  EXPECT_EQ(s.data().cwiseAbs().maxCoeff(), 0.0);
}

TEST(SampleGaussian, IdentityCoordinateVariances) {
  const auto s = sample_gaussian(CovarianceModel::identity(2), 100'000, 42);
  const Vector var = column_variances(s);
  EXPECT_NEAR(var(0), 1.0, 0.02);
  EXPECT_NEAR(var(1), 1.0, 0.02);

  // Independent generator at the same n lands inside the same band.
  std::mt19937_64 engine(7);
  std::normal_distribution<double> normal;
  double acc = 0.0;
  for (int i = 0; i < 100'000; ++i) {
    const double z = normal(engine);
    acc += z * z;
  }
  EXPECT_NEAR(acc / 100'000, 1.0, 0.02);
}

TEST(SampleGaussian, DiagonalSpectrumRecovered) {
  const CovarianceModel model({4.0, 1.0});
  const Matrix c = sample_covariance(sample_gaussian(model, 100'000, 3));
  EXPECT_NEAR(c(0, 0), 4.0, 0.1);
  EXPECT_NEAR(c(1, 1), 1.0, 0.1);
  EXPECT_NEAR(c(0, 1), 0.0, 0.05);
}

TEST(SampleGaussian, SameSeedIsBitIdenticalAcrossThreadCounts) {
  const auto model = CovarianceModel::poly_decay(6, 1.0).with_random_basis(11);
  const Matrix reference = sample_gaussian(model, 50, 99).data();
  for (int threads : {1, 2, 8}) {
    std::vector<Matrix> out(16);
    parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = sample_gaussian(model, 50, 99).data(); });
    for (const auto& m : out) EXPECT_TRUE((m.array() == reference.array()).all());
  }
  EXPECT_FALSE((sample_gaussian(model, 50, 100).data().array() == reference.array()).all());
}

TEST(SampleCovariance, RankOneOuterProduct) {
  Matrix x(1, 2);
  x << 1.0, 2.0;
  const Matrix c = sample_covariance(SampleSet(x));
  Matrix expected(2, 2);
  expected << 1.0, 2.0, 2.0, 4.0;
  EXPECT_EQ(c, expected);
}

TEST(SampleCovariance, AveragesObservations) {
  const Matrix c = sample_covariance(SampleSet(Matrix::Identity(2, 2)));
  EXPECT_EQ(c, 0.5 * Matrix::Identity(2, 2));
}

TEST(SampleCovariance, OperatorNormErrorAtTenThousand) {
  const CovarianceModel model({2.0, 1.0});
  const Matrix err = sample_covariance(sample_gaussian(model, 10'000, 5)) - model.matrix();
  EXPECT_LE(sym_eigenvalues(err).cwiseAbs().maxCoeff(), 0.15);
}

TEST(SampleCovariance, PrefixAndSubsetAgreeWithDirectComputation) {
  const auto s = sample_gaussian(CovarianceModel::identity(3), 20, 8);
  const Matrix top = s.data().topRows(7);
  const Matrix direct = top.transpose() * top / 7.0;
  EXPECT_LE((sample_covariance(s, 7) - direct).cwiseAbs().maxCoeff(), 1e-14);
  const std::vector<Index> rows{0, 1, 2, 3, 4, 5, 6};
  EXPECT_EQ(sample_covariance(s, std::span<const Index>(rows)), sample_covariance(s, 7));
}

TEST(SampleCovariance, PsdWithRankAtMostMinNd) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Index d = 2 + static_cast<Index>(seed % 7);
    const Index n = 1 + static_cast<Index>((seed * 5) % 11);
    const auto s = sample_gaussian(CovarianceModel::poly_decay(d, 0.5).with_random_basis(seed), n, seed + 1000);
    const Matrix c = sample_covariance(s);
    EXPECT_EQ(c, c.transpose());
    const Vector eig = sym_eigenvalues(c);
    EXPECT_GE(eig.minCoeff(), 0.0);
    const double tol = 1e-10 * eig(0);
    const auto rank = (eig.array() > tol).count();
    EXPECT_LE(rank, std::min(n, d));
  }
}

TEST(SymEig, DiagonalInputSortedDescending) {
  Vector diag(3);
  diag << 3.0, 1.0, 2.0;
  const auto dec = sym_eig(diag.asDiagonal());
  EXPECT_DOUBLE_EQ(dec.eigenvalues(0), 3.0);
  EXPECT_DOUBLE_EQ(dec.eigenvalues(1), 2.0);
  EXPECT_DOUBLE_EQ(dec.eigenvalues(2), 1.0);
}

TEST(SymEig, NegativeEigenvalueBeyondClipThresholdIsKept) {
  Matrix a(2, 2);
  a << 0.0, 1.0, 1.0, 0.0;
  const auto dec = sym_eig(a);
  EXPECT_NEAR(dec.eigenvalues(0), 1.0, 1e-15);
  EXPECT_NEAR(dec.eigenvalues(1), -1.0, 1e-15);
}

TEST(SymEig, TinyNegativesClippedToZero) {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 0) = 1.0;
  a(2, 2) = -1e-13;
  const auto dec = sym_eig(a);
  EXPECT_EQ(dec.eigenvalues(2), 0.0);
  EXPECT_EQ(sym_eigenvalues(a)(2), 0.0);
}

TEST(SymEig, WishartReconstructionAndIdempotence) {
  const auto s = sample_gaussian(CovarianceModel::identity(8).with_random_basis(4), 12, 77);
  const Matrix a = s.data().transpose() * s.data();
  const Matrix sym = 0.5 * (a + a.transpose());
  const auto dec = sym_eig(sym);
  const double norm = dec.eigenvalues(0);
  EXPECT_LE((dec.reconstruct() - sym).cwiseAbs().maxCoeff(), 1e-8 * (1.0 + norm));
  const Matrix ortho = dec.eigenvectors.transpose() * dec.eigenvectors - Matrix::Identity(8, 8);
  EXPECT_LE(ortho.cwiseAbs().maxCoeff(), 1e-12);

  const Matrix rebuilt = dec.reconstruct();
  const auto again = sym_eig(0.5 * (rebuilt + rebuilt.transpose()));
  EXPECT_LE((again.eigenvalues - dec.eigenvalues).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SymEig, RejectsAsymmetricInput) {
  Matrix a(2, 2);
  a << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(sym_eig(a), InvalidArgument);
}

TEST(CovarianceModel, SortsAndValidates) {
  const CovarianceModel m({1.0, 3.0, 2.0});
  EXPECT_EQ(m.eigenvalues(), (std::vector<double>{3.0, 2.0, 1.0}));
  EXPECT_THROW(CovarianceModel({1.0, -0.5}), InvalidArgument);
  EXPECT_THROW(CovarianceModel(std::vector<double>{}), InvalidArgument);
  Matrix skew = Matrix::Identity(2, 2);
  skew(0, 1) = 0.1;
  EXPECT_THROW(CovarianceModel({1.0, 1.0}, skew), InvalidArgument);
}

TEST(CovarianceModel, RandomBasisIsOrthonormalAndPreservesSpectrum) {
  const auto m = CovarianceModel::poly_decay(10, 1.5).with_random_basis(2024);
  ASSERT_TRUE(m.basis().has_value());
  const Matrix v = *m.basis();
  EXPECT_LE((v.transpose() * v - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-10);
  const Vector eig = sym_eigenvalues(m.matrix());
  for (Index k = 0; k < 10; ++k) EXPECT_NEAR(eig(k), m.eigenvalues()[static_cast<std::size_t>(k)], 1e-12);
}

TEST(ReadSamplesCsv, WithAndWithoutHeader) {
  std::istringstream with_header("x,y\n1,2\n3.5, -4e-1\n\n");
  const auto a = read_samples_csv(with_header);
  EXPECT_EQ(a.n(), 2);
  EXPECT_EQ(a.dim(), 2);
  EXPECT_DOUBLE_EQ(a.data()(1, 1), -0.4);

  std::istringstream bare("1,2,3\n4,5,6\r\n");
  const auto b = read_samples_csv(bare);
  EXPECT_EQ(b.n(), 2);
  EXPECT_EQ(b.dim(), 3);
  EXPECT_DOUBLE_EQ(b.data()(1, 2), 6.0);
}

TEST(ReadSamplesCsv, RejectsMalformedInput) {
  std::istringstream ragged("1,2\n3\n");
  EXPECT_THROW(read_samples_csv(ragged), InvalidArgument);
  std::istringstream text("1,2\nfoo,3\n");
  EXPECT_THROW(read_samples_csv(text), InvalidArgument);
  std::istringstream empty("a,b\n");
  EXPECT_THROW(read_samples_csv(empty), InvalidArgument);
  std::istringstream nonfinite("1,inf\n");
  EXPECT_THROW(read_samples_csv(nonfinite), InvalidArgument);
}

}  // namespace
}  // namespace covfun
