#pragma once

// Dense symmetric linear algebra and Gaussian sampling.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "covfun/error.hpp"
#include "covfun/random.hpp"

namespace covfun {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Ground-truth covariance given by its spectrum and an optional orthonormal basis.
///
/// Eigenvalues are kept sorted non-increasing. Without a basis the covariance is
/// diag(eigenvalues).
class CovarianceModel {
 public:
  explicit CovarianceModel(std::vector<double> eigenvalues, std::optional<Matrix> basis = std::nullopt)
      : eigenvalues_(std::move(eigenvalues)), basis_(std::move(basis)) {
    detail::require(!eigenvalues_.empty(), "covariance model needs at least one eigenvalue");
    for (double v : eigenvalues_) {
      detail::require(std::isfinite(v) && v >= 0.0, "covariance eigenvalues must be finite and >= 0");
    }
    std::sort(eigenvalues_.begin(), eigenvalues_.end(), std::greater<>());
    if (basis_) {
      const auto d = static_cast<Index>(eigenvalues_.size());
      detail::require(basis_->rows() == d && basis_->cols() == d, "basis must be d x d");
      const double defect = (basis_->transpose() * *basis_ - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
      detail::require(defect <= 1e-10, "basis is not orthonormal (max |V^T V - I| = " + std::to_string(defect) + ")");
    }
  }

  static CovarianceModel identity(Index d) {
    detail::require(d >= 1, "identity model needs d >= 1");
    return CovarianceModel(std::vector<double>(static_cast<std::size_t>(d), 1.0));
  }

  /// lambda_k = k^{-beta}, k = 1..d.
  static CovarianceModel poly_decay(Index d, double beta) {
    detail::require(d >= 1, "poly_decay model needs d >= 1");
    std::vector<double> values(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) values[static_cast<std::size_t>(k)] = std::pow(static_cast<double>(k + 1), -beta);
    return CovarianceModel(std::move(values));
  }

  /// Same spectrum, rotated by a Haar-distributed orthogonal basis (QR of a seeded Gaussian matrix).
  CovarianceModel with_random_basis(std::uint64_t seed) const;

  Index dim() const { return static_cast<Index>(eigenvalues_.size()); }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  const std::optional<Matrix>& basis() const { return basis_; }

  /// Basis matrix, identity when absent.
  Matrix basis_or_identity() const { return basis_ ? *basis_ : Matrix::Identity(dim(), dim()); }

  Matrix matrix() const {
    const Vector lambda = Eigen::Map<const Vector>(eigenvalues_.data(), dim());
    if (!basis_) return lambda.asDiagonal();
    Matrix m = *basis_ * lambda.asDiagonal() * basis_->transpose();
    return 0.5 * (m + m.transpose());
  }

 private:
  std::vector<double> eigenvalues_;
  std::optional<Matrix> basis_;
};

/// n observations of dimension d, one per row.
class SampleSet {
 public:
  explicit SampleSet(Matrix data) : data_(std::move(data)) {
    detail::require(data_.rows() >= 1 && data_.cols() >= 1, "sample set must have n >= 1 rows and d >= 1 columns");
    detail::require(data_.allFinite(), "sample set contains non-finite entries");
  }

  Index n() const { return data_.rows(); }
  Index dim() const { return data_.cols(); }
  const Matrix& data() const { return data_; }

 private:
  Matrix data_;
};

struct SpectralDecomposition {
  Vector eigenvalues;  // descending
  Matrix eigenvectors;  // column k pairs with eigenvalues(k)

  Matrix reconstruct() const { return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose(); }
};

inline Matrix random_orthogonal(Index d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix g(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

inline CovarianceModel CovarianceModel::with_random_basis(std::uint64_t seed) const {
  return CovarianceModel(eigenvalues_, random_orthogonal(dim(), seed));
}

/// n i.i.d. N(0, Sigma) rows, X = V diag(sqrt(lambda)) Z. Normals are drawn row by row.
inline SampleSet sample_gaussian(const CovarianceModel& model, Index n, std::uint64_t seed) {
  detail::require(n >= 1, "sample_gaussian needs n >= 1");
  const Index d = model.dim();
  Rng rng(seed);
  Matrix z(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) z(i, k) = rng.normal();

  Vector scale(d);
  for (Index k = 0; k < d; ++k) scale(k) = std::sqrt(model.eigenvalues()[static_cast<std::size_t>(k)]);
  Matrix x = z * scale.asDiagonal();
  if (model.basis()) x = x * model.basis()->transpose();
  return SampleSet(std::move(x));
}

namespace detail {

inline Matrix gram_over_rows(const Matrix& rows) {
  Matrix c = Matrix::Zero(rows.cols(), rows.cols());
  c.selfadjointView<Eigen::Lower>().rankUpdate(rows.transpose(), 1.0 / static_cast<double>(rows.rows()));
  return Matrix(c.selfadjointView<Eigen::Lower>());
}

}  // namespace detail

/// (1/k) sum_{i<k} X_i X_i^T over the first k observations.
inline Matrix sample_covariance(const SampleSet& s, Index k) {
  detail::require(k >= 1 && k <= s.n(), "prefix length out of range");
  return detail::gram_over_rows(s.data().topRows(k));
}

inline Matrix sample_covariance(const SampleSet& s) { return sample_covariance(s, s.n()); }

/// Sample covariance of the observations with the given row indices.
inline Matrix sample_covariance(const SampleSet& s, std::span<const Index> rows) {
  detail::require(!rows.empty(), "empty row subset");
  Matrix picked(static_cast<Index>(rows.size()), s.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) picked.row(static_cast<Index>(i)) = s.data().row(rows[i]);
  return detail::gram_over_rows(picked);
}

namespace detail {

inline void check_symmetric(const Matrix& a) {
  require(a.rows() == a.cols(), "matrix is not square");
  require(a.allFinite(), "matrix has non-finite entries");
  if (a.size() == 0) return;
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-8, "matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
}

inline void clip_near_zero(Vector& descending) {
  if (descending.size() == 0) return;
  const double norm = std::max(std::abs(descending(0)), std::abs(descending(descending.size() - 1)));
  const double clip_eps = 1e-10 * norm;
  for (double& v : descending)
    if (v < 0.0 && v > -clip_eps) v = 0.0;
}

inline void check_converged(Eigen::ComputationInfo info, Index d) {
  if (info != Eigen::Success) {
    throw EigenSolverError("symmetric eigensolver did not converge: d = " + std::to_string(d) +
                           ", QR iteration limit " + std::to_string(30 * d) + " exhausted");
  }
}

}  // namespace detail

/// Eigendecomposition with eigenvalues descending; negatives in (-1e-10 ||A||, 0) are set to 0.
inline SpectralDecomposition sym_eig(const Matrix& a) {
  detail::check_symmetric(a);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::ComputeEigenvectors);
  detail::check_converged(solver.info(), a.rows());
  SpectralDecomposition out{solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
  detail::clip_near_zero(out.eigenvalues);
  return out;
}

/// Eigenvalues only, same ordering and clipping as sym_eig.
inline Vector sym_eigenvalues(const Matrix& a) {
  detail::check_symmetric(a);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
  detail::check_converged(solver.info(), a.rows());
  Vector values = solver.eigenvalues().reverse();
  detail::clip_near_zero(values);
  return values;
}

/// Reads observations from CSV: one row per observation, optional header row,
/// blank lines ignored. Every row must have the same number of columns.
inline SampleSet read_samples_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    std::vector<double> row;
    bool numeric = true;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      std::string_view field = rest.substr(0, comma);
      while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
      while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
      if (!field.empty() && field.front() == '+') field.remove_prefix(1);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        numeric = false;
      }
      row.push_back(value);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }

    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;  // header
      throw InvalidArgument("CSV line " + std::to_string(line_no) + ": non-numeric field");
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InvalidArgument("CSV line " + std::to_string(line_no) + ": expected " +
                            std::to_string(rows.front().size()) + " columns, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  detail::require(!rows.empty(), "CSV contains no observations");

  Matrix data(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) data(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  return SampleSet(std::move(data));
}

inline SampleSet read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open data file: " + path);
  return read_samples_csv(in);
}

}  // namespace covfun
