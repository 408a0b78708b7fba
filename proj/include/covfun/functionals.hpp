#pragma once

// Test functions f with f(0) = 0, their analytic derivatives, and trace functionals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "covfun/error.hpp"
#include "covfun/random.hpp"

namespace covfun {

/// Bounds sup_{x in [0, domain_max]} |f^(j)(x)| for j = 0..max_order. Entries may be +inf.
struct SmoothnessBounds {
  double domain_max = std::numeric_limits<double>::infinity();
  std::vector<double> sup_derivative;
};

/// Parameters a function was built from; enough to rebuild it by name.
struct FunctionParams {
  std::string kind;
  std::vector<double> values;
};

/// A smooth f: R+ -> R with analytic derivatives f^(0..max_order).
class TestFunction {
 public:
  using Evaluator = std::function<double(int order, double x)>;

  TestFunction(std::string name, int max_order, Evaluator eval, SmoothnessBounds bounds,
               std::optional<double> linear_slope = std::nullopt, FunctionParams params = {})
      : name_(std::move(name)),
        max_order_(max_order),
        eval_(std::make_shared<const Evaluator>(std::move(eval))),
        bounds_(std::move(bounds)),
        linear_slope_(linear_slope),
        params_(std::move(params)) {
    detail::require(max_order_ >= 1, "test function needs max_order >= 1");
    detail::require(std::abs((*eval_)(0, 0.0)) <= 1e-12, "test function '" + name_ + "' must satisfy f(0) = 0");
    bounds_.sup_derivative.resize(static_cast<std::size_t>(max_order_) + 1, std::numeric_limits<double>::infinity());
  }

  const std::string& name() const { return name_; }
  int max_order() const { return max_order_; }
  const FunctionParams& params() const { return params_; }

  double operator()(double x) const { return (*eval_)(0, x); }

  double derivative(int order, double x) const {
    if (order < 0 || order > max_order_) {
      throw InvalidArgument("derivative order " + std::to_string(order) + " unavailable for '" + name_ + "'");
    }
    return (*eval_)(order, x);
  }

  const SmoothnessBounds& bounds() const { return bounds_; }

  double sup_derivative(int order) const {
    if (order < 0 || order > max_order_) return std::numeric_limits<double>::infinity();
    return bounds_.sup_derivative[static_cast<std::size_t>(order)];
  }

  /// ||f'||_Lip = sup |f''|.
  double lipschitz_first_derivative() const { return sup_derivative(2); }

  /// Set when f(x) = slope * x; estimators then use the trace directly.
  std::optional<double> linear_slope() const { return linear_slope_; }

  /// a f + b g, with derivatives up to the smaller max_order.
  static TestFunction linear_combination(double a, const TestFunction& f, double b, const TestFunction& g) {
    const int order = std::min(f.max_order(), g.max_order());
    SmoothnessBounds bounds{std::min(f.bounds().domain_max, g.bounds().domain_max), {}};
    for (int j = 0; j <= order; ++j) {
      bounds.sup_derivative.push_back(std::abs(a) * f.sup_derivative(j) + std::abs(b) * g.sup_derivative(j));
    }
    std::optional<double> slope;
    if (f.linear_slope() && g.linear_slope()) slope = a * *f.linear_slope() + b * *g.linear_slope();
    auto fe = f.eval_;
    auto ge = g.eval_;
    std::ostringstream name;
    name << a << "*" << f.name() << "+" << b << "*" << g.name();
    return TestFunction(
        name.str(), order, [a, b, fe, ge](int j, double x) { return a * (*fe)(j, x) + b * (*ge)(j, x); },
        std::move(bounds), slope, {"combination", {a, b}});
  }

 private:
  std::string name_;
  int max_order_;
  std::shared_ptr<const Evaluator> eval_;
  SmoothnessBounds bounds_;
  std::optional<double> linear_slope_;
  FunctionParams params_;
};

namespace detail {

constexpr int kBuiltinOrder = 8;
constexpr double kInf = std::numeric_limits<double>::infinity();

inline double factorial(int k) {
  double r = 1.0;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

/// Probabilists' Hermite polynomial He_k(u).
inline double hermite(int k, double u) {
  double prev = 1.0;
  if (k == 0) return prev;
  double cur = u;
  for (int j = 1; j < k; ++j) {
    const double next = u * cur - j * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// sup_u |He_k(u) exp(-u^2/2)|: dense scan, then golden-section refinement.
inline double compute_hermite_envelope(int k) {
  auto g = [k](double u) { return std::abs(hermite(k, u) * std::exp(-0.5 * u * u)); };
  double best_u = 0.0;
  double best = g(0.0);
  for (double u = 0.0; u <= 12.0; u += 1e-3) {
    const double v = g(u);
    if (v > best) best = v, best_u = u;
  }
  double lo = std::max(0.0, best_u - 1e-3);
  double hi = best_u + 1e-3;
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double c = hi - ratio * (hi - lo);
    const double d = lo + ratio * (hi - lo);
    if (g(c) > g(d)) hi = d; else lo = c;
  }
  return std::max(best, g(0.5 * (lo + hi)));  // |He_k phi| is even in u
}

inline double hermite_envelope(int k) {
  static const std::vector<double> table = [] {
    std::vector<double> t;
    for (int j = 0; j <= kBuiltinOrder; ++j) t.push_back(compute_hermite_envelope(j));
    return t;
  }();
  return table.at(static_cast<std::size_t>(k));
}

}  // namespace detail

inline TestFunction identity_function() {
  return TestFunction(
      "identity", detail::kBuiltinOrder,
      [](int j, double x) { return j == 0 ? x : (j == 1 ? 1.0 : 0.0); },
      {detail::kInf, {detail::kInf, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}}, 1.0, {"identity", {}});
}

inline TestFunction square_function() {
  return TestFunction(
      "square", detail::kBuiltinOrder,
      [](int j, double x) {
        switch (j) {
          case 0: return x * x;
          case 1: return 2.0 * x;
          case 2: return 2.0;
          default: return 0.0;
        }
      },
      {detail::kInf, {detail::kInf, detail::kInf, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}}, std::nullopt, {"square", {}});
}

/// x^3 with bounds declared on [0, domain_max].
inline TestFunction cube_function(double domain_max = 10.0) {
  const double a = domain_max;
  return TestFunction(
      "cube", detail::kBuiltinOrder,
      [](int j, double x) {
        switch (j) {
          case 0: return x * x * x;
          case 1: return 3.0 * x * x;
          case 2: return 6.0 * x;
          case 3: return 6.0;
          default: return 0.0;
        }
      },
      {a, {a * a * a, 3.0 * a * a, 6.0 * a, 6.0, 0.0, 0.0, 0.0, 0.0, 0.0}}, std::nullopt, {"cube", {a}});
}

/// log(1 + x); f^(j)(x) = (-1)^(j-1) (j-1)! / (1+x)^j.
inline TestFunction log1p_function() {
  SmoothnessBounds bounds{detail::kInf, {detail::kInf}};
  for (int j = 1; j <= detail::kBuiltinOrder; ++j) bounds.sup_derivative.push_back(detail::factorial(j - 1));
  return TestFunction(
      "log1p", detail::kBuiltinOrder,
      [](int j, double x) {
        if (j == 0) return std::log1p(x);
        const double sign = (j % 2 == 1) ? 1.0 : -1.0;
        return sign * detail::factorial(j - 1) / std::pow(1.0 + x, j);
      },
      std::move(bounds), std::nullopt, {"log1p", {}});
}

/// x / (1 + x) = 1 - 1/(1+x); f^(j)(x) = (-1)^(j+1) j! / (1+x)^(j+1).
inline TestFunction rational_function() {
  SmoothnessBounds bounds{detail::kInf, {1.0}};
  for (int j = 1; j <= detail::kBuiltinOrder; ++j) bounds.sup_derivative.push_back(detail::factorial(j));
  return TestFunction(
      "rational", detail::kBuiltinOrder,
      [](int j, double x) {
        if (j == 0) return x / (1.0 + x);
        const double sign = (j % 2 == 1) ? 1.0 : -1.0;
        return sign * detail::factorial(j) / std::pow(1.0 + x, j + 1);
      },
      std::move(bounds), std::nullopt, {"rational", {}});
}

/// sin(omega x) / omega; |f^(j)| <= omega^(j-1) for j >= 1.
inline TestFunction scaled_sine_function(double omega = 1.0) {
  detail::require(omega > 0.0 && std::isfinite(omega), "scaled_sine needs omega > 0");
  SmoothnessBounds bounds{detail::kInf, {1.0 / omega}};
  for (int j = 1; j <= detail::kBuiltinOrder; ++j) bounds.sup_derivative.push_back(std::pow(omega, j - 1));
  std::ostringstream name;
  name << std::setprecision(17) << "scaled_sine(omega=" << omega << ")";
  return TestFunction(
      name.str(), detail::kBuiltinOrder,
      [omega](int j, double x) {
        const double scale = std::pow(omega, j - 1);
        const double t = omega * x;
        switch (j % 4) {
          case 0: return scale * std::sin(t);
          case 1: return scale * std::cos(t);
          case 2: return -scale * std::sin(t);
          default: return -scale * std::cos(t);
        }
      },
      std::move(bounds), std::nullopt, {"scaled_sine", {omega}});
}

/// amplitude * (phi((x - shift)/width) - phi(-shift/width)), phi(u) = exp(-u^2/2).
/// Derivatives: amplitude * (-1/width)^j He_j(u) phi(u). Bounds hold on all of R.
inline TestFunction gaussian_bump_function(double shift, double width, double amplitude = 1.0) {
  detail::require(width > 0.0 && std::isfinite(width) && std::isfinite(shift) && std::isfinite(amplitude),
                  "bump needs finite shift/amplitude and width > 0");
  const double offset = std::exp(-0.5 * (shift / width) * (shift / width));
  SmoothnessBounds bounds{detail::kInf, {std::abs(amplitude)}};
  for (int j = 1; j <= detail::kBuiltinOrder; ++j) {
    bounds.sup_derivative.push_back(std::abs(amplitude) * detail::hermite_envelope(j) / std::pow(width, j));
  }
  std::ostringstream name;
  name << std::setprecision(17) << "bump(shift=" << shift << ",width=" << width << ",amplitude=" << amplitude << ")";
  return TestFunction(
      name.str(), detail::kBuiltinOrder,
      [shift, width, amplitude, offset](int j, double x) {
        const double u = (x - shift) / width;
        const double phi = std::exp(-0.5 * u * u);
        if (j == 0) return amplitude * (phi - offset);
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        return amplitude * sign * detail::hermite(j, u) * phi / std::pow(width, j);
      },
      std::move(bounds), std::nullopt, {"bump", {shift, width, amplitude}});
}

namespace detail {

inline std::vector<double> parse_params(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      require(used == item.size(), "bad function parameter '" + item + "'");
    } catch (const std::logic_error&) {
      throw InvalidArgument("bad function parameter '" + item + "'");
    }
  }
  return out;
}

}  // namespace detail

/// Looks up a builtin by name. Optional parameters follow a colon:
/// `scaled_sine:omega`, `bump:shift:width[:amplitude]`, `cube:domain_max`.
inline TestFunction builtin(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  const std::vector<double> p = colon == std::string::npos ? std::vector<double>{} : detail::parse_params(spec.substr(colon + 1));
  auto no_params = [&] { detail::require(p.empty(), "function '" + name + "' takes no parameters"); };

  if (name == "identity") return no_params(), identity_function();
  if (name == "square") return no_params(), square_function();
  if (name == "log1p") return no_params(), log1p_function();
  if (name == "rational") return no_params(), rational_function();
  if (name == "cube") {
    detail::require(p.size() <= 1, "cube takes at most one parameter");
    return p.empty() ? cube_function() : cube_function(p[0]);
  }
  if (name == "scaled_sine" || name == "sine") {
    detail::require(p.size() <= 1, "scaled_sine takes at most one parameter");
    return scaled_sine_function(p.empty() ? 1.0 : p[0]);
  }
  if (name == "bump") {
    detail::require(p.empty() || p.size() == 2 || p.size() == 3, "bump takes shift:width[:amplitude]");
    if (p.empty()) return gaussian_bump_function(2.0, 1.0);
    return gaussian_bump_function(p[0], p[1], p.size() == 3 ? p[2] : 1.0);
  }
  throw InvalidArgument("unknown test function '" + name + "'");
}

/// tau_f = sum_j f(lambda_j).
inline double tau_f(const TestFunction& f, std::span<const double> eigenvalues) {
  double sum = 0.0;
  for (double v : eigenvalues) {
    detail::require(v >= 0.0, "tau_f needs nonnegative eigenvalues");
    sum += f(v);
  }
  return sum;
}

/// Largest relative mismatch between a central difference of f^(j) and f^(j+1)
/// over the grid, for j < max_order.
inline double derivative_consistency_error(const TestFunction& f, std::span<const double> grid, double step = 1e-5) {
  double worst = 0.0;
  for (int j = 0; j < f.max_order(); ++j) {
    for (double x : grid) {
      const double fd = (f.derivative(j, x + step) - f.derivative(j, x - step)) / (2.0 * step);
      const double exact = f.derivative(j + 1, x);
      worst = std::max(worst, std::abs(fd - exact) / std::max(1.0, std::abs(exact)));
    }
  }
  return worst;
}

/// max over the grid and j = 1..m+1 of |f^(j)(x)|.
inline double max_derivative_on_grid(const TestFunction& f, int m, std::span<const double> grid) {
  double worst = 0.0;
  for (int j = 1; j <= m + 1; ++j)
    for (double x : grid) worst = std::max(worst, std::abs(f.derivative(j, x)));
  return worst;
}

/// Finite surrogate for the class of C^{m+1} functions with derivative bounds <= 1.
struct FunctionClassGrid {
  int order = 1;
  std::vector<TestFunction> members;
};

/// Deterministic dictionary: sin(x) first, then alternating Gaussian bumps and
/// scaled sines with seeded parameters, each scaled so sup|f^(j)| <= 1 for j <= m+1.
inline FunctionClassGrid default_grid(int m, int count, std::uint64_t seed) {
  detail::require(m >= 1, "function grid needs m >= 1");
  detail::require(count >= 1, "function grid needs count >= 1");
  detail::require(m + 1 <= detail::kBuiltinOrder, "function grid supports m <= 7");
  FunctionClassGrid grid{m, {scaled_sine_function(1.0)}};
  Rng rng(derive_seed(seed, {0x67726964ULL}));
  while (static_cast<int>(grid.members.size()) < count) {
    if (grid.members.size() % 2 == 1) {
      const double shift = 0.5 + 3.5 * rng.uniform();
      const double width = 0.5 + 1.5 * rng.uniform();
      double worst = 0.0;
      for (int j = 1; j <= m + 1; ++j) worst = std::max(worst, detail::hermite_envelope(j) / std::pow(width, j));
      grid.members.push_back(gaussian_bump_function(shift, width, 1.0 / worst));
    } else {
      const double omega = 0.2 + 0.8 * rng.uniform();
      grid.members.push_back(scaled_sine_function(omega));
    }
  }
  return grid;
}

/// CSV with columns name,kind,p1,p2,p3 (parameters printed round-trip exact).
inline void write_grid_csv(const FunctionClassGrid& grid, std::ostream& out) {
  out << "name,kind,p1,p2,p3\n";
  out << std::setprecision(17);
  for (const auto& f : grid.members) {
    out << '"' << f.name() << "\"," << f.params().kind;
    for (std::size_t i = 0; i < 3; ++i) {
      out << ',';
      if (i < f.params().values.size()) out << f.params().values[i];
    }
    out << '\n';
  }
}

/// Rebuilds a grid written by write_grid_csv.
inline FunctionClassGrid read_grid_csv(std::istream& in, int order) {
  FunctionClassGrid grid{order, {}};
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto close = line.rfind('"');
    detail::require(close != std::string::npos, "grid CSV row must start with a quoted name");
    std::stringstream rest(line.substr(close + 2));
    std::string kind;
    std::getline(rest, kind, ',');
    std::vector<double> p;
    std::string field;
    while (std::getline(rest, field, ','))
      if (!field.empty()) p.push_back(std::stod(field));
    if (kind == "scaled_sine" && p.size() == 1) {
      grid.members.push_back(scaled_sine_function(p[0]));
    } else if (kind == "bump" && p.size() == 3) {
      grid.members.push_back(gaussian_bump_function(p[0], p[1], p[2]));
    } else if (p.empty()) {
      grid.members.push_back(builtin(kind));
    } else {
      throw InvalidArgument("cannot rebuild grid member of kind '" + kind + "'");
    }
  }
  return grid;
}

}  // namespace covfun
