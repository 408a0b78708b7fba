#pragma once

// Estimators of trace functionals tau_f(Sigma) and of the spectral measure of Sigma:
// plug-in, bias-reduced aggregation over several sample sizes, and its
// symmetrized (jackknife) version computed as an incomplete U-statistic.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "covfun/error.hpp"
#include "covfun/functionals.hpp"
#include "covfun/linalg.hpp"
#include "covfun/parallel.hpp"
#include "covfun/random.hpp"

namespace covfun {

/// Sample sizes n_1 < ... < n_m = n and coefficients C_j with
/// sum C_j = 1 and sum C_j / n_j^l = 0 for l = 1..m-1.
struct AggregationScheme {
  int m = 1;
  std::vector<Index> sizes;
  std::vector<double> coeffs;
  double q = std::numeric_limits<double>::quiet_NaN();  // schedule ratio; NaN if sizes were given directly

  Index n() const { return sizes.back(); }

  double sum_abs_coeffs() const {
    double s = 0.0;
    for (double c : coeffs) s += std::abs(c);
    return s;
  }

  /// Scheme for explicit sizes; m = 1 gives the plug-in estimator.
  static AggregationScheme from_sizes(std::vector<Index> sizes, double q = std::numeric_limits<double>::quiet_NaN());
};

/// C_j = prod_{i != j} n_j / (n_j - n_i).
inline std::vector<double> closed_form_coefficients(std::span<const Index> sizes) {
  std::vector<double> c(sizes.size(), 1.0);
  for (std::size_t j = 0; j < sizes.size(); ++j)
    for (std::size_t i = 0; i < sizes.size(); ++i)
      if (i != j) {
        c[j] *= static_cast<double>(sizes[j]) / static_cast<double>(sizes[j] - sizes[i]);
      }
  return c;
}

/// Solves the m x m system directly. Rows are written in y_j = n_1 / n_j so that
/// every entry lies in (0, 1]; the solution is the same.
inline std::vector<double> solve_coefficient_system(std::span<const Index> sizes) {
  const auto m = static_cast<Index>(sizes.size());
  Matrix a(m, m);
  Vector rhs = Vector::Zero(m);
  rhs(0) = 1.0;
  const double smallest = static_cast<double>(sizes.front());
  for (Index j = 0; j < m; ++j) {
    const double y = smallest / static_cast<double>(sizes[static_cast<std::size_t>(j)]);
    double power = 1.0;
    for (Index l = 0; l < m; ++l, power *= y) a(l, j) = power;
  }
  const Vector c = a.fullPivLu().solve(rhs);
  return {c.data(), c.data() + m};
}

struct CoefficientDefects {
  double sum = 0.0;                // |sum C_j - 1|
  double moments = 0.0;            // max_l |sum C_j/n_j^l| / max_j |C_j/n_j^l|
  double closed_vs_system = 0.0;   // max_j |C_closed - C_solve| / max_j |C_closed|
};

inline CoefficientDefects coefficient_defects(std::span<const Index> sizes, std::span<const double> coeffs) {
  CoefficientDefects out;
  out.sum = std::abs(std::accumulate(coeffs.begin(), coeffs.end(), 0.0) - 1.0);
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    double total = 0.0;
    double scale = 0.0;
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      const double term = coeffs[j] / std::pow(static_cast<double>(sizes[j]), static_cast<double>(l));
      total += term;
      scale = std::max(scale, std::abs(term));
    }
    out.moments = std::max(out.moments, scale > 0.0 ? std::abs(total) / scale : 0.0);
  }
  const auto solved = solve_coefficient_system(sizes);
  double diff = 0.0;
  double mag = 0.0;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    diff = std::max(diff, std::abs(solved[j] - coeffs[j]));
    mag = std::max(mag, std::abs(coeffs[j]));
  }
  out.closed_vs_system = diff / mag;
  return out;
}

inline AggregationScheme AggregationScheme::from_sizes(std::vector<Index> sizes, double q) {
  detail::require(!sizes.empty(), "aggregation scheme needs at least one sample size");
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    detail::require(sizes[j] >= 1, "sample sizes must be positive");
    if (j > 0 && sizes[j] <= sizes[j - 1]) {
      throw SchemeError("sample sizes must be strictly increasing; sizes " + std::to_string(sizes[j - 1]) + " and " +
                        std::to_string(sizes[j]) + " collide");
    }
  }
  AggregationScheme scheme;
  scheme.m = static_cast<int>(sizes.size());
  scheme.coeffs = closed_form_coefficients(sizes);
  scheme.sizes = std::move(sizes);
  scheme.q = q;
  const auto defects = coefficient_defects(scheme.sizes, scheme.coeffs);
  if (defects.sum > 1e-10 || defects.moments > 1e-10 || defects.closed_vs_system > 1e-8) {
    throw NumericalError("aggregation coefficients fail their identities (sum defect " + std::to_string(defects.sum) +
                         ", moment defect " + std::to_string(defects.moments) + ")");
  }
  return scheme;
}

/// n_j = round(q^{j-m} n) for j = 1..m, with n_m = n.
inline AggregationScheme make_scheme(int m, Index n, double q) {
  detail::require(m >= 2, "aggregation needs m >= 2");
  detail::require(q > 1.0 && std::isfinite(q), "schedule ratio q must be > 1");
  detail::require(n >= 1, "sample size must be positive");
  const double spread = std::pow(q, m - 1);
  if (static_cast<double>(n) < 2.0 * spread) {
    throw SchemeError("sample-size schedule collapses: m = " + std::to_string(m) + ", q = " + std::to_string(q) +
                      " needs n >= " + std::to_string(2.0 * spread) + " but n = " + std::to_string(n) +
                      "; use a larger n or a smaller q");
  }
  std::vector<Index> sizes(static_cast<std::size_t>(m));
  for (int j = 1; j <= m; ++j) {
    sizes[static_cast<std::size_t>(j - 1)] =
        j == m ? n : static_cast<Index>(std::llround(std::pow(q, j - m) * static_cast<double>(n)));
  }
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    if (sizes[j] < 2 || (j > 0 && sizes[j] <= sizes[j - 1])) {
      std::string list;
      for (Index s : sizes) list += (list.empty() ? "" : ",") + std::to_string(s);
      throw SchemeError("sample-size schedule collapses after rounding (sizes " + list +
                        "); use a larger n or a smaller q");
    }
  }
  // n_1 >= n / c with c = q^{m-1}, up to rounding of n_1.
  if (static_cast<double>(sizes.front()) < static_cast<double>(n) / spread - 0.5) {
    throw SchemeError("smallest sample size falls below n / q^{m-1}");
  }
  return AggregationScheme::from_sizes(std::move(sizes), q);
}

enum class EstimatorMode { plugin, aggregate, jackknife };

inline std::string to_string(EstimatorMode mode) {
  switch (mode) {
    case EstimatorMode::plugin: return "plugin";
    case EstimatorMode::aggregate: return "aggregate";
    case EstimatorMode::jackknife: return "jackknife";
  }
  return "?";
}

inline EstimatorMode parse_mode(const std::string& text) {
  if (text == "plugin") return EstimatorMode::plugin;
  if (text == "aggregate") return EstimatorMode::aggregate;
  if (text == "jackknife") return EstimatorMode::jackknife;
  throw InvalidArgument("unknown estimator mode '" + text + "' (expected plugin, aggregate or jackknife)");
}

/// Chooses the rows of subset `subset` at level `level`: k distinct indices in [0, n).
using SubsetSelector = std::function<std::vector<Index>(int level, int subset, Index n, Index k)>;

struct JackknifeOptions {
  int subsets_per_level = 50;
  std::uint64_t seed = 0;
  long max_eigendecompositions = 1'000'000;
  SubsetSelector selector;  // empty: uniform random subsets
};

/// Uniform k-subset of [0, n) by partial Fisher-Yates, returned sorted.
inline std::vector<Index> uniform_subset(Index n, Index k, std::uint64_t seed) {
  detail::require(k >= 1 && k <= n, "subset size out of range");
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  Rng rng(seed);
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

namespace detail {

/// A subsample: either the first `prefix` rows, or an explicit row list.
struct Subsample {
  Index prefix = 0;
  std::vector<Index> rows;
};

struct Level {
  double coeff;
  std::vector<Subsample> subsamples;
};

inline bool is_leading_block(const std::vector<Index>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i] != static_cast<Index>(i)) return false;
  return true;
}

inline std::vector<Level> plan_levels(Index n, const AggregationScheme& scheme, EstimatorMode mode,
                                      const JackknifeOptions& options) {
  if (scheme.n() != n) {
    throw InvalidArgument("scheme ends at n = " + std::to_string(scheme.n()) + " but the sample has n = " +
                          std::to_string(n));
  }
  std::vector<Level> levels;
  if (mode == EstimatorMode::plugin) {
    levels.push_back({1.0, {{n, {}}}});
    return levels;
  }
  if (mode == EstimatorMode::aggregate) {
    for (int j = 0; j < scheme.m; ++j) levels.push_back({scheme.coeffs[static_cast<std::size_t>(j)], {{scheme.sizes[static_cast<std::size_t>(j)], {}}}});
    return levels;
  }

  require(options.subsets_per_level >= 1, "jackknife needs at least one subset per level");
  long work = 0;
  for (Index size : scheme.sizes) work += size < n ? options.subsets_per_level : 1;
  if (work > options.max_eigendecompositions) {
    throw BudgetError("jackknife needs " + std::to_string(work) + " eigendecompositions, budget is " +
                      std::to_string(options.max_eigendecompositions));
  }
  for (int j = 0; j < scheme.m; ++j) {
    const Index k = scheme.sizes[static_cast<std::size_t>(j)];
    Level level{scheme.coeffs[static_cast<std::size_t>(j)], {}};
    if (k == n) {
      level.subsamples.push_back({n, {}});
    } else {
      for (int b = 0; b < options.subsets_per_level; ++b) {
        std::vector<Index> rows =
            options.selector ? options.selector(j, b, n, k)
                             : uniform_subset(n, k, derive_seed(options.seed, {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(b)}));
        require(static_cast<Index>(rows.size()) == k, "subset selector returned the wrong number of rows");
        if (is_leading_block(rows)) {
          level.subsamples.push_back({k, {}});
        } else {
          level.subsamples.push_back({0, std::move(rows)});
        }
      }
    }
    levels.push_back(std::move(level));
  }
  return levels;
}

inline Matrix subsample_covariance(const SampleSet& s, const Subsample& sub) {
  if (sub.rows.empty()) return sample_covariance(s, sub.prefix);
  return sample_covariance(s, std::span<const Index>(sub.rows));
}

/// (1/k) sum ||X_i||^2 over the subsample.
inline double subsample_trace(const SampleSet& s, const Subsample& sub) {
  double total = 0.0;
  if (sub.rows.empty()) {
    for (Index i = 0; i < sub.prefix; ++i) total += s.data().row(i).squaredNorm();
    return total / static_cast<double>(sub.prefix);
  }
  for (Index i : sub.rows) total += s.data().row(i).squaredNorm();
  return total / static_cast<double>(sub.rows.size());
}

inline Vector subsample_eigenvalues(const SampleSet& s, const Subsample& sub) {
  return sym_eigenvalues(subsample_covariance(s, sub));
}

inline double evaluate_levels(const TestFunction& f, const SampleSet& s, const std::vector<Level>& levels) {
  double estimate = 0.0;
  for (const Level& level : levels) {
    // Running mean: identical subsample values average to exactly that value.
    double mean = 0.0;
    std::size_t count = 0;
    for (const Subsample& sub : level.subsamples) {
      double value = 0.0;
      if (f.linear_slope()) {
        value = *f.linear_slope() * subsample_trace(s, sub);
      } else {
        const Vector eig = subsample_eigenvalues(s, sub);
        value = tau_f(f, std::span<const double>(eig.data(), static_cast<std::size_t>(eig.size())));
      }
      ++count;
      mean += (value - mean) / static_cast<double>(count);
    }
    estimate += level.coeff * mean;
  }
  return estimate;
}

}  // namespace detail

/// tau_f of the sample covariance eigenvalues. Linear f uses the trace directly.
inline double plugin_estimate(const TestFunction& f, const SampleSet& s) {
  return detail::evaluate_levels(f, s, detail::plan_levels(s.n(), AggregationScheme::from_sizes({s.n()}), EstimatorMode::plugin, {}));
}

/// sum_j C_j tau_f(Sigma_hat_{n_j}), where Sigma_hat_{n_j} uses the first n_j observations.
inline double aggregate_estimate(const TestFunction& f, const SampleSet& s, const AggregationScheme& scheme) {
  return detail::evaluate_levels(f, s, detail::plan_levels(s.n(), scheme, EstimatorMode::aggregate, {}));
}

/// sum_j C_j * (average of tau_f over B size-n_j subsets); the full-sample level is used once.
inline double jackknife_estimate(const TestFunction& f, const SampleSet& s, const AggregationScheme& scheme,
                                 const JackknifeOptions& options) {
  return detail::evaluate_levels(f, s, detail::plan_levels(s.n(), scheme, EstimatorMode::jackknife, options));
}

inline double estimate(EstimatorMode mode, const TestFunction& f, const SampleSet& s, const AggregationScheme& scheme,
                       const JackknifeOptions& options) {
  switch (mode) {
    case EstimatorMode::plugin: return plugin_estimate(f, s);
    case EstimatorMode::aggregate: return aggregate_estimate(f, s, scheme);
    case EstimatorMode::jackknife: return jackknife_estimate(f, s, scheme, options);
  }
  return 0.0;
}

struct Atom {
  double location;
  double weight;
};

/// Weighted atoms on R+; weights may be negative.
class SignedSpectralMeasure {
 public:
  void add(double location, double weight) {
    detail::require(std::isfinite(location) && location >= 0.0, "atom location must be finite and >= 0");
    atoms_.push_back({location, weight});
  }

  const std::vector<Atom>& atoms() const { return atoms_; }

  double integrate(const TestFunction& f) const {
    double total = 0.0;
    for (const Atom& a : atoms_) total += a.weight * f(a.location);
    return total;
  }

  double total_mass() const {
    double total = 0.0;
    for (const Atom& a : atoms_) total += a.weight;
    return total;
  }

  /// Atoms ordered by location, ties by weight.
  std::vector<Atom> sorted_atoms() const {
    std::vector<Atom> out = atoms_;
    std::sort(out.begin(), out.end(), [](const Atom& x, const Atom& y) {
      return x.location < y.location || (x.location == y.location && x.weight < y.weight);
    });
    return out;
  }

  /// CSV with columns location,weight; values printed round-trip exact.
  void write_csv(std::ostream& out) const {
    out << "location,weight\n" << std::setprecision(17);
    for (const Atom& a : sorted_atoms()) out << a.location << ',' << a.weight << '\n';
  }

 private:
  std::vector<Atom> atoms_;
};

/// Unit mass at each eigenvalue of Sigma, with multiplicity.
inline SignedSpectralMeasure spectral_measure(const CovarianceModel& model) {
  SignedSpectralMeasure mu;
  for (double v : model.eigenvalues()) mu.add(v, 1.0);
  return mu;
}

/// Signed measure whose integral against f is the corresponding scalar estimator.
inline SignedSpectralMeasure spectral_measure_estimate(const SampleSet& s, const AggregationScheme& scheme,
                                                       EstimatorMode mode, const JackknifeOptions& options = {}) {
  SignedSpectralMeasure mu;
  for (const auto& level : detail::plan_levels(s.n(), scheme, mode, options)) {
    const double weight = level.coeff / static_cast<double>(level.subsamples.size());
    for (const auto& sub : level.subsamples) {
      const Vector eig = detail::subsample_eigenvalues(s, sub);
      for (double v : eig) mu.add(v, weight);
    }
  }
  return mu;
}

/// <f'(Sigma), Sigma_hat - Sigma>, evaluated in the eigenbasis of Sigma.
inline double linear_term(const TestFunction& f, const CovarianceModel& model, const Matrix& sigma_hat) {
  detail::require(sigma_hat.rows() == model.dim() && sigma_hat.cols() == model.dim(), "dimension mismatch");
  const Matrix basis = model.basis_or_identity();
  const Matrix rotated = basis.transpose() * sigma_hat * basis;
  double total = 0.0;
  for (Index k = 0; k < model.dim(); ++k) {
    const double lambda = model.eigenvalues()[static_cast<std::size_t>(k)];
    total += f.derivative(1, lambda) * (rotated(k, k) - lambda);
  }
  return total;
}

/// tau_f(Sigma_hat) - tau_f(Sigma) - <f'(Sigma), Sigma_hat - Sigma>.
inline double taylor_remainder(const TestFunction& f, const CovarianceModel& model, const Matrix& sigma_hat) {
  const Vector eig = sym_eigenvalues(sigma_hat);
  const double perturbed = tau_f(f, std::span<const double>(eig.data(), static_cast<std::size_t>(eig.size())));
  return perturbed - tau_f(f, model.eigenvalues()) - linear_term(f, model, sigma_hat);
}

struct BiasPoint {
  Index n;
  double bias;
  double se;
};

struct BiasTerm {
  int order;           // l in b_l / n^l
  double coefficient;
  double se;
};

struct BiasExpansionFit {
  std::vector<BiasPoint> points;
  std::vector<BiasTerm> terms;
};

/// Monte Carlo plug-in bias at each n, then weighted least squares of bias(n)
/// on (1/n, ..., 1/n^terms) without intercept.
inline BiasExpansionFit fit_bias_expansion(const TestFunction& f, const CovarianceModel& model,
                                           std::vector<Index> n_list, int terms, int reps, std::uint64_t seed,
                                           int threads = 1) {
  std::sort(n_list.begin(), n_list.end());
  n_list.erase(std::unique(n_list.begin(), n_list.end()), n_list.end());
  detail::require(terms >= 1, "bias expansion needs at least one term");
  detail::require(n_list.size() >= 3 && static_cast<int>(n_list.size()) > terms,
                  "singular design: need at least 3 distinct n values and more n values than terms");
  detail::require(reps >= 2, "bias expansion needs reps >= 2");

  const double truth = tau_f(f, model.eigenvalues());
  BiasExpansionFit fit;
  for (Index n : n_list) {
    std::vector<double> errors(static_cast<std::size_t>(reps));
    parallel_for(errors.size(), threads, [&](std::size_t r) {
      const auto data = sample_gaussian(model, n, derive_seed(seed, {static_cast<std::uint64_t>(n), r}));
      errors[r] = plugin_estimate(f, data) - truth;
    });
    const double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / reps;
    double ss = 0.0;
    for (double e : errors) ss += (e - mean) * (e - mean);
    fit.points.push_back({n, mean, std::sqrt(ss / (reps - 1) / reps)});
  }

  const auto k = static_cast<Index>(fit.points.size());
  const double n0 = static_cast<double>(n_list.front());
  bool weighted = true;
  for (const auto& p : fit.points) weighted = weighted && p.se > 0.0;
  Matrix design(k, terms);
  Vector y(k);
  Vector w(k);
  for (Index i = 0; i < k; ++i) {
    const auto& p = fit.points[static_cast<std::size_t>(i)];
    const double x = n0 / static_cast<double>(p.n);
    for (int l = 0; l < terms; ++l) design(i, l) = std::pow(x, l + 1);
    y(i) = p.bias;
    w(i) = weighted ? 1.0 / (p.se * p.se) : 1.0;
  }
  const Matrix normal = design.transpose() * w.asDiagonal() * design;
  Eigen::FullPivLU<Matrix> lu(normal);
  detail::require(lu.isInvertible(), "singular design in bias expansion fit");
  const Vector beta = lu.solve(design.transpose() * w.asDiagonal() * y);
  Matrix cov = lu.inverse();
  if (!weighted) {
    const Vector resid = y - design * beta;
    const double dof = std::max<double>(1.0, static_cast<double>(k - terms));
    cov *= resid.squaredNorm() / dof;
  }
  for (int l = 0; l < terms; ++l) {
    const double scale = std::pow(n0, l + 1);
    fit.terms.push_back({l + 1, beta(l) * scale, std::sqrt(std::max(0.0, cov(l, l))) * scale});
  }
  return fit;
}

}  // namespace covfun
