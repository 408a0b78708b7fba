#pragma once

// Seeded Monte Carlo replication of the estimators: bias, L2/L4 errors, rate
// slopes, normal-approximation distances and sup-norm errors over function grids.
//
// Replicate i of an experiment uses the seed derive_seed(master, {i}) and writes
// only its own slot, so results do not depend on the number of worker threads.

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "covfun/error.hpp"
#include "covfun/estimators.hpp"
#include "covfun/functionals.hpp"
#include "covfun/linalg.hpp"
#include "covfun/parallel.hpp"
#include "covfun/random.hpp"
#include "covfun/settings.hpp"
#include "covfun/theory.hpp"

namespace covfun {

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw InvalidArgument("'" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

template <class Int>
Int parse_integer(const std::string& key, const std::string& text) {
  Int v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw InvalidArgument("'" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace detail

/// Eigenvalue profile of the ground truth: `identity:d`, `poly:d:beta` or `custom:v1,v2,...`,
/// optionally rotated by a seeded random orthogonal basis.
struct ModelSpec {
  std::string text = "identity:10";
  std::optional<std::uint64_t> basis_seed;

  CovarianceModel build() const {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string rest = colon == std::string::npos ? std::string{} : text.substr(colon + 1);
    std::optional<CovarianceModel> model;
    if (kind == "identity") {
      model = CovarianceModel::identity(detail::parse_integer<Index>("model", rest));
    } else if (kind == "poly") {
      const auto parts = detail::split(rest, ':');
      detail::require(parts.size() == 2, "poly model expects poly:d:beta");
      model = CovarianceModel::poly_decay(detail::parse_integer<Index>("model", parts[0]), detail::parse_double("model", parts[1]));
    } else if (kind == "custom") {
      std::vector<double> values;
      for (const auto& p : detail::split(rest, ',')) values.push_back(detail::parse_double("model", p));
      model = CovarianceModel(std::move(values));
    } else {
      throw InvalidArgument("unknown model '" + text + "' (expected identity:d, poly:d:beta or custom:v1,v2,...)");
    }
    if (basis_seed) return model->with_random_basis(*basis_seed);
    return *model;
  }
};

enum class Standardization { oracle, plugin };

struct ExperimentConfig {
  ModelSpec model;
  std::string function = "identity";
  EstimatorMode mode = EstimatorMode::plugin;
  int m = 2;
  double q = 2.0;
  int subsets = 50;  // B, jackknife only
  Index n = 100;
  std::vector<Index> n_list;  // rate sweeps
  long replications = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  Standardization standardization = Standardization::oracle;
};

/// Resolved configuration as flat settings (every default written out).
inline Settings to_settings(const ExperimentConfig& c) {
  Settings s;
  s["model"] = c.model.text;
  s["basis_seed"] = c.model.basis_seed ? std::to_string(*c.model.basis_seed) : "none";
  s["f"] = c.function;
  s["mode"] = to_string(c.mode);
  s["m"] = std::to_string(c.m);
  s["q"] = detail::format_double(c.q);
  s["B"] = std::to_string(c.subsets);
  s["n"] = std::to_string(c.n);
  std::string list;
  for (Index v : c.n_list) list += (list.empty() ? "" : ",") + std::to_string(v);
  s["n_list"] = list;
  s["R"] = std::to_string(c.replications);
  s["seed"] = std::to_string(c.seed);
  s["threads"] = std::to_string(c.threads);
  s["standardization"] = c.standardization == Standardization::oracle ? "oracle" : "plugin";
  return s;
}

/// Reads the keys to_settings writes; absent keys keep their defaults.
inline ExperimentConfig experiment_config_from_settings(const Settings& s, ExperimentConfig c = {}) {
  auto get = [&](const char* key) -> const std::string* {
    const auto it = s.find(key);
    return it == s.end() ? nullptr : &it->second;
  };
  if (auto v = get("model")) c.model.text = *v;
  if (auto v = get("basis_seed")) {
    if (*v == "none" || v->empty()) c.model.basis_seed.reset();
    else c.model.basis_seed = detail::parse_integer<std::uint64_t>("basis_seed", *v);
  }
  if (auto v = get("f")) c.function = *v;
  if (auto v = get("mode")) c.mode = parse_mode(*v);
  if (auto v = get("m")) c.m = detail::parse_integer<int>("m", *v);
  if (auto v = get("q")) c.q = detail::parse_double("q", *v);
  if (auto v = get("B")) c.subsets = detail::parse_integer<int>("B", *v);
  if (auto v = get("n")) c.n = detail::parse_integer<Index>("n", *v);
  if (auto v = get("n_list")) {
    c.n_list.clear();
    if (!v->empty())
      for (const auto& p : detail::split(*v, ',')) c.n_list.push_back(detail::parse_integer<Index>("n_list", p));
  }
  if (auto v = get("R")) c.replications = detail::parse_integer<long>("R", *v);
  if (auto v = get("seed")) c.seed = detail::parse_integer<std::uint64_t>("seed", *v);
  if (auto v = get("threads")) c.threads = detail::parse_integer<int>("threads", *v);
  if (auto v = get("standardization")) {
    if (*v == "oracle") c.standardization = Standardization::oracle;
    else if (*v == "plugin") c.standardization = Standardization::plugin;
    else throw InvalidArgument("standardization must be oracle or plugin");
  }
  return c;
}

/// Hash of the resolved configuration, excluding the thread count.
inline std::string config_hash(const ExperimentConfig& c) {
  Settings s = to_settings(c);
  s.erase("threads");
  std::ostringstream text;
  write_settings(s, text);
  return fnv1a_hex(text.str());
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  detail::require(p > 0.0 && p < 1.0, "normal quantile needs p in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// sup |F_R - Phi| over the sample's empirical distribution function.
inline double ks_distance_to_normal(std::vector<double> sample) {
  detail::require(!sample.empty(), "KS distance needs a nonempty sample");
  std::sort(sample.begin(), sample.end());
  const double r = static_cast<double>(sample.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double phi = normal_cdf(sample[i]);
    worst = std::max({worst, static_cast<double>(i + 1) / r - phi, phi - static_cast<double>(i) / r});
  }
  return std::clamp(worst, 0.0, 1.0);
}

/// Order statistics paired with Phi^{-1}((i - 1/2)/R), i = 1..R.
inline std::vector<std::pair<double, double>> qq_points(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  const double r = static_cast<double>(sample.size());
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    out.emplace_back(normal_quantile((static_cast<double>(i) + 0.5) / r), sample[i]);
  }
  return out;
}

/// mean |x_(i) - Phi^{-1}((i - 1/2)/R)|.
inline double wasserstein1_to_normal(std::vector<double> sample) {
  detail::require(!sample.empty(), "Wasserstein distance needs a nonempty sample");
  const double r = static_cast<double>(sample.size());
  double total = 0.0;
  for (const auto& [theory, observed] : qq_points(std::move(sample))) total += std::abs(observed - theory);
  return total / r;
}

struct Summary {
  long replicates = 0;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double bias_se = 0.0;
  double rmse = 0.0;
  double l4_error = 0.0;
  double std_dev = 0.0;
  double standardized_mean = 0.0;
  double standardized_variance = 0.0;
  double ks = 0.0;
  double w1 = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  double truth = 0.0;
  std::vector<double> estimates;
  std::vector<double> standardized;
  Summary summary;
};

namespace detail {

/// Sum in sorted order so the result depends only on the multiset of values.
inline double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

inline double sample_variance(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mean = sorted_sum(values) / static_cast<double>(values.size());
  std::vector<double> sq;
  sq.reserve(values.size());
  for (double v : values) sq.push_back((v - mean) * (v - mean));
  return sorted_sum(sq) / static_cast<double>(values.size() - 1);
}

}  // namespace detail

inline Summary summarize(const std::vector<double>& estimates, const std::vector<double>& standardized, double truth) {
  detail::require(!estimates.empty(), "summary needs at least one replicate");
  const double r = static_cast<double>(estimates.size());
  Summary s;
  s.replicates = static_cast<long>(estimates.size());
  s.truth = truth;
  s.mean = detail::sorted_sum(estimates) / r;
  s.bias = s.mean - truth;
  s.std_dev = std::sqrt(detail::sample_variance(estimates));
  s.bias_se = s.std_dev / std::sqrt(r);
  std::vector<double> sq;
  std::vector<double> quad;
  for (double e : estimates) {
    const double err = e - truth;
    sq.push_back(err * err);
    quad.push_back(err * err * err * err);
  }
  s.rmse = std::sqrt(detail::sorted_sum(sq) / r);
  s.l4_error = std::pow(detail::sorted_sum(quad) / r, 0.25);
  if (!standardized.empty()) {
    s.standardized_mean = detail::sorted_sum(standardized) / static_cast<double>(standardized.size());
    s.standardized_variance = detail::sample_variance(standardized);
    s.ks = ks_distance_to_normal(standardized);
    s.w1 = wasserstein1_to_normal(standardized);
  }
  return s;
}

namespace detail {

struct PreparedExperiment {
  CovarianceModel model;
  TestFunction function;
  AggregationScheme scheme;
  double truth;
  double oracle_scale;
};

inline PreparedExperiment prepare(const ExperimentConfig& c) {
  require(c.replications >= 1, "replications R must be >= 1");
  require(c.replications <= 100'000, "replications R is capped at 100000");
  require(c.n >= 1, "n must be >= 1");
  CovarianceModel model = c.model.build();
  TestFunction f = builtin(c.function);
  AggregationScheme scheme = c.mode == EstimatorMode::plugin ? AggregationScheme::from_sizes({c.n})
                                                             : make_scheme(c.m, c.n, c.q);
  const double truth = tau_f(f, model.eigenvalues());
  const double scale = gaussian_limit_std(f, model);
  return {std::move(model), std::move(f), std::move(scheme), truth, scale};
}

inline std::uint64_t jackknife_seed(std::uint64_t replicate_seed) { return derive_seed(replicate_seed, {0x6a61636bULL}); }

}  // namespace detail

/// R replicates of one estimator at one n.
inline ExperimentResult run(const ExperimentConfig& config) {
  const auto prep = detail::prepare(config);
  const auto count = static_cast<std::size_t>(config.replications);
  ExperimentResult result;
  result.config = config;
  result.truth = prep.truth;
  result.estimates.assign(count, 0.0);
  result.standardized.assign(count, 0.0);
  const double root_n = std::sqrt(static_cast<double>(config.n));

  parallel_for(count, config.threads, [&](std::size_t i) {
    try {
      const std::uint64_t seed = derive_seed(config.seed, {i});
      const SampleSet data = sample_gaussian(prep.model, config.n, seed);
      JackknifeOptions jk;
      jk.subsets_per_level = config.subsets;
      jk.seed = detail::jackknife_seed(seed);
      const double value = estimate(config.mode, prep.function, data, prep.scheme, jk);
      double scale = prep.oracle_scale;
      if (config.standardization == Standardization::plugin) {
        const Vector eig = sym_eigenvalues(sample_covariance(data));
        scale = gaussian_limit_std(prep.function, std::span<const double>(eig.data(), static_cast<std::size_t>(eig.size())));
      }
      result.estimates[i] = value;
      result.standardized[i] = scale > 0.0 ? root_n * (value - prep.truth) / (std::numbers::sqrt2 * scale)
                                           : std::numeric_limits<double>::quiet_NaN();
    } catch (const InvalidArgument&) {
      throw;
    } catch (const std::exception& e) {
      throw ReplicateError(static_cast<long>(i), e.what());
    }
  });

  const bool finite = std::all_of(result.standardized.begin(), result.standardized.end(), [](double v) { return std::isfinite(v); });
  result.summary = summarize(result.estimates, finite ? result.standardized : std::vector<double>{}, prep.truth);
  return result;
}

struct RateRow {
  Index n;
  double rmse;
  double bias;
  double bias_se;
};

struct RateSweep {
  std::vector<RateRow> rows;
  std::vector<ExperimentResult> runs;
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares of log(RMSE) on log(n).
inline RateSweep rate_sweep(const ExperimentConfig& config) {
  std::vector<Index> ns = config.n_list;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  detail::require(ns.size() >= 3, "rate sweep needs at least 3 distinct n values");
  detail::require(ns.back() >= 4 * ns.front(), "rate sweep n values must span at least a factor of 4");

  RateSweep sweep;
  for (Index n : ns) {
    ExperimentConfig c = config;
    c.n = n;
    c.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(n)});
    auto res = run(c);
    sweep.rows.push_back({n, res.summary.rmse, res.summary.bias, res.summary.bias_se});
    sweep.runs.push_back(std::move(res));
  }

  const double k = static_cast<double>(sweep.rows.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& r : sweep.rows) {
    mx += std::log(static_cast<double>(r.n));
    my += std::log(r.rmse);
  }
  mx /= k;
  my /= k;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& r : sweep.rows) {
    const double dx = std::log(static_cast<double>(r.n)) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(r.rmse) - my);
  }
  sweep.slope = sxy / sxx;
  sweep.intercept = my - sweep.slope * mx;
  double rss = 0.0;
  for (const auto& r : sweep.rows) {
    const double fitted = sweep.intercept + sweep.slope * std::log(static_cast<double>(r.n));
    rss += (std::log(r.rmse) - fitted) * (std::log(r.rmse) - fitted);
  }
  sweep.slope_se = std::sqrt(rss / (k - 2.0) / sxx);
  return sweep;
}

struct SupNormResult {
  std::vector<std::string> names;
  std::vector<double> truths;
  std::vector<double> rmse;              // per function
  std::vector<double> max_errors;        // per replicate: max over the grid of |error|
  double mean_max_error = 0.0;
  double rms_max_error = 0.0;
};

/// Integrates every grid member against the estimated signed measure and against mu_Sigma.
inline SupNormResult supnorm_experiment(const FunctionClassGrid& grid, const ExperimentConfig& config) {
  detail::require(!grid.members.empty(), "sup-norm experiment needs a nonempty grid");
  detail::require(config.replications >= 1 && config.replications <= 100'000, "replications R must be in [1, 100000]");
  const CovarianceModel model = config.model.build();
  const AggregationScheme scheme = config.mode == EstimatorMode::plugin ? AggregationScheme::from_sizes({config.n})
                                                                        : make_scheme(config.m, config.n, config.q);
  const std::size_t k = grid.members.size();
  const auto count = static_cast<std::size_t>(config.replications);

  SupNormResult out;
  for (const auto& f : grid.members) {
    out.names.push_back(f.name());
    out.truths.push_back(tau_f(f, model.eigenvalues()));
  }
  std::vector<std::vector<double>> errors(count, std::vector<double>(k, 0.0));
  parallel_for(count, config.threads, [&](std::size_t i) {
    try {
      const std::uint64_t seed = derive_seed(config.seed, {i});
      const SampleSet data = sample_gaussian(model, config.n, seed);
      JackknifeOptions jk;
      jk.subsets_per_level = config.subsets;
      jk.seed = detail::jackknife_seed(seed);
      const auto mu = spectral_measure_estimate(data, scheme, config.mode, jk);
      for (std::size_t j = 0; j < k; ++j) errors[i][j] = mu.integrate(grid.members[j]) - out.truths[j];
    } catch (const InvalidArgument&) {
      throw;
    } catch (const std::exception& e) {
      throw ReplicateError(static_cast<long>(i), e.what());
    }
  });

  std::vector<double> max_sq;
  for (std::size_t i = 0; i < count; ++i) {
    double worst = 0.0;
    for (double e : errors[i]) worst = std::max(worst, std::abs(e));
    out.max_errors.push_back(worst);
    max_sq.push_back(worst * worst);
  }
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> sq;
    for (std::size_t i = 0; i < count; ++i) sq.push_back(errors[i][j] * errors[i][j]);
    out.rmse.push_back(std::sqrt(detail::sorted_sum(sq) / static_cast<double>(count)));
  }
  out.mean_max_error = detail::sorted_sum(out.max_errors) / static_cast<double>(count);
  out.rms_max_error = std::sqrt(detail::sorted_sum(max_sq) / static_cast<double>(count));
  return out;
}

struct NormalityReport {
  ExperimentResult result;
  double ks = 0.0;
  double w1 = 0.0;
  std::vector<std::pair<double, double>> qq;  // (normal quantile, observed)
};

inline NormalityReport normality_check(const ExperimentConfig& config) {
  detail::require(config.replications >= 200, "normality check needs R >= 200");
  NormalityReport report;
  report.result = run(config);
  report.ks = ks_distance_to_normal(report.result.standardized);
  report.w1 = wasserstein1_to_normal(report.result.standardized);
  report.qq = qq_points(report.result.standardized);
  return report;
}

inline void write_replicates_csv(const ExperimentResult& result, std::ostream& out) {
  out << "replicate,estimate,standardized\n" << std::setprecision(17);
  for (std::size_t i = 0; i < result.estimates.size(); ++i) {
    out << i << ',' << result.estimates[i] << ',' << result.standardized[i] << '\n';
  }
}

inline void write_summary_csv(const Summary& s, std::ostream& out) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double r = static_cast<double>(s.replicates);
  out << "metric,value,se\n" << std::setprecision(17);
  auto row = [&](const char* name, double value, double se) { out << name << ',' << value << ',' << se << '\n'; };
  row("replicates", r, nan);
  row("truth", s.truth, nan);
  row("mean", s.mean, s.bias_se);
  row("bias", s.bias, s.bias_se);
  row("rmse", s.rmse, nan);
  row("l4_error", s.l4_error, nan);
  row("std_dev", s.std_dev, nan);
  row("standardized_mean", s.standardized_mean, nan);
  row("standardized_variance", s.standardized_variance, nan);
  row("ks", s.ks, nan);
  row("w1", s.w1, nan);
}

inline void write_qq_csv(const std::vector<std::pair<double, double>>& qq, std::ostream& out) {
  out << "normal_quantile,observed\n" << std::setprecision(17);
  for (const auto& [theory, observed] : qq) out << theory << ',' << observed << '\n';
}

}  // namespace covfun
