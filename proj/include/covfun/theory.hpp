#pragma once

// Closed-form reference quantities: effective rank, the three-term error rate,
// the Gaussian-limit scale, and the Marchenko-Pastur law.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "covfun/error.hpp"
#include "covfun/functionals.hpp"
#include "covfun/linalg.hpp"
#include "covfun/quadrature.hpp"

namespace covfun {

/// r = sum(lambda) / max(lambda).
inline double effective_rank(std::span<const double> eigenvalues) {
  double top = 0.0;
  double sum = 0.0;
  for (double v : eigenvalues) {
    top = std::max(top, v);
    sum += v;
  }
  detail::require(top > 0.0, "effective rank needs at least one positive eigenvalue");
  return sum / top;
}

inline double effective_rank(const CovarianceModel& model) { return effective_rank(model.eigenvalues()); }

/// r(Sigma^2) = sum(lambda^2) / max(lambda)^2.
inline double effective_rank_of_square(const CovarianceModel& model) {
  std::vector<double> squares;
  for (double v : model.eigenvalues()) squares.push_back(v * v);
  return effective_rank(squares);
}

/// ||Sigma f'(Sigma)||_2 = sqrt(sum lambda^2 f'(lambda)^2).
inline double gaussian_limit_std(const TestFunction& f, std::span<const double> eigenvalues) {
  double total = 0.0;
  for (double v : eigenvalues) {
    const double term = v * f.derivative(1, v);
    total += term * term;
  }
  return std::sqrt(total);
}

inline double gaussian_limit_std(const TestFunction& f, const CovarianceModel& model) {
  return gaussian_limit_std(f, model.eigenvalues());
}

/// Error-rate terms with constants dropped; for dominance diagnostics only.
struct RateBudget {
  double main_term = 0.0;        // ||Sigma f'(Sigma)||_2 / sqrt(n)
  double linear_residual = 0.0;  // r / n
  double bias_term = 0.0;        // r (sqrt(r/n))^{m+1}
  double total = 0.0;
};

inline RateBudget rate_budget(const TestFunction& f, const CovarianceModel& model, Index n, int m) {
  detail::require(n >= 1, "rate budget needs n >= 1");
  detail::require(m >= 2, "rate budget needs m >= 2");
  const double r = effective_rank(model);
  const double nn = static_cast<double>(n);
  RateBudget out;
  out.main_term = gaussian_limit_std(f, model) / std::sqrt(nn);
  out.linear_residual = r / nn;
  out.bias_term = r * std::pow(std::sqrt(r / nn), m + 1);
  out.total = out.main_term + out.linear_residual + out.bias_term;
  return out;
}

/// Limiting eigenvalue distribution of the sample covariance for Sigma = I and d/n -> gamma.
class MarchenkoPastur {
 public:
  explicit MarchenkoPastur(double gamma) : gamma_(gamma) {
    detail::require(gamma > 0.0 && std::isfinite(gamma), "Marchenko-Pastur ratio gamma must be > 0");
    lower_ = (1.0 - std::sqrt(gamma)) * (1.0 - std::sqrt(gamma));
    upper_ = (1.0 + std::sqrt(gamma)) * (1.0 + std::sqrt(gamma));
  }

  double gamma() const { return gamma_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }

  /// Point mass at zero, present for gamma > 1.
  double atom_at_zero() const { return gamma_ > 1.0 ? 1.0 - 1.0 / gamma_ : 0.0; }

  /// Density of the continuous part.
  double density(double x) const {
    if (x < lower_ || x > upper_) return 0.0;
    if (x == 0.0) return std::numeric_limits<double>::infinity();
    const double spread = std::max(0.0, (x - lower_) * (upper_ - x));
    return std::sqrt(spread) / (2.0 * std::numbers::pi * gamma_ * x);
  }

  /// Distribution function including the atom. The square-root edges are removed
  /// by x = a + t^2 on the lower half of the support and x = b - t^2 on the upper half.
  double cdf(double x, double tol = 1e-8) const {
    if (x < 0.0) return 0.0;
    double total = atom_at_zero();
    if (x <= lower_) return total;
    const double width = upper_ - lower_;
    const double mid = 0.5 * (lower_ + upper_);
    const double norm = 1.0 / (2.0 * std::numbers::pi * gamma_);
    auto from_lower = [&](double t) {
      const double s = t * t;
      if (lower_ + s == 0.0) return norm * 2.0 * std::sqrt(width);
      return norm * 2.0 * s * std::sqrt(std::max(0.0, width - s)) / (lower_ + s);
    };
    auto from_upper = [&](double t) {
      const double s = t * t;
      return norm * 2.0 * s * std::sqrt(std::max(0.0, width - s)) / (upper_ - s);
    };
    const double xc = std::min(x, upper_);
    if (xc <= mid) return total + adaptive_simpson(from_lower, 0.0, std::sqrt(xc - lower_), tol);
    total += adaptive_simpson(from_lower, 0.0, std::sqrt(mid - lower_), tol);
    total += adaptive_simpson(from_upper, std::sqrt(std::max(0.0, upper_ - xc)), std::sqrt(upper_ - mid), tol);
    return total;
  }

 private:
  double gamma_;
  double lower_;
  double upper_;
};

/// sup_x |F_esd(x) - F_mp(x)| where F_esd puts mass 1/d on each eigenvalue.
inline double esd_ks_distance(std::vector<double> eigenvalues, const MarchenkoPastur& law) {
  detail::require(!eigenvalues.empty(), "empty spectrum");
  std::sort(eigenvalues.begin(), eigenvalues.end());
  const double d = static_cast<double>(eigenvalues.size());
  double worst = 0.0;
  std::size_t i = 0;
  while (i < eigenvalues.size()) {
    std::size_t j = i;
    while (j < eigenvalues.size() && eigenvalues[j] == eigenvalues[i]) ++j;
    const double f = law.cdf(eigenvalues[i]);
    // F_mp jumps only at 0.
    const double f_left = eigenvalues[i] == 0.0 ? 0.0 : f;
    worst = std::max({worst, std::abs(static_cast<double>(j) / d - f), std::abs(static_cast<double>(i) / d - f_left)});
    i = j;
  }
  return worst;
}

}  // namespace covfun
