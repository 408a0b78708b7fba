// covfun: estimate trace functionals of a covariance matrix and run the Monte Carlo checks.
//
// Every subcommand resolves its settings as defaults < --config file < explicit flags,
// writes the result to <outdir>/config.resolved, and accepts that file back via --config.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "covfun/covfun.hpp"

namespace {

using namespace covfun;

constexpr int exit_invalid = 2;
constexpr int exit_numerical = 3;

struct Key {
  std::string name;
  std::string fallback;
  std::string help;
};

std::string flag_of(const std::string& key) {
  std::string flag = "--" + key;
  for (auto& c : flag) if (c == '_') c = '-';
  return flag;
}

std::string default_threads() {
  return std::to_string(std::max(1u, std::thread::hardware_concurrency()));
}

std::vector<Key> experiment_keys() {
  return {
      {"model", "identity:10", "eigenvalue profile: identity:d, poly:d:beta or custom:v1,v2,..."},
      {"basis_seed", "none", "seed of a random orthogonal eigenbasis, or none"},
      {"f", "identity", "test function (identity, square, cube, log1p, rational, scaled_sine:w, bump:s:w[:a])"},
      {"mode", "plugin", "plugin, aggregate or jackknife"},
      {"m", "2", "number of aggregation levels"},
      {"q", "2", "ratio between consecutive subsample sizes"},
      {"B", "50", "random subsets per level (jackknife)"},
      {"n", "100", "sample size"},
      {"R", "100", "replications"},
      {"seed", "", "master seed"},
      {"threads", default_threads(), "worker threads (does not affect results)"},
      {"standardization", "oracle", "oracle or plugin"},
  };
}

class Command {
 public:
  Command(CLI::App& app, std::string name, std::string description, std::vector<Key> keys)
      : name_(std::move(name)), keys_(std::move(keys)) {
    sub_ = app.add_subcommand(name_, std::move(description));
    sub_->add_option("--config", config_path_, "key=value settings file (flags take precedence)");
    sub_->add_option("--outdir", outdir_, "directory for config.resolved and CSV output")->capture_default_str();
    for (const auto& k : keys_) sub_->add_option(flag_of(k.name), flags_[k.name], k.help);
  }

  Command(const Command&) = delete;
  Command& operator=(const Command&) = delete;

  CLI::App* app() const { return sub_; }
  const std::string& name() const { return name_; }
  const std::string& outdir() const { return outdir_; }

  /// defaults < config file < flags.
  Settings resolve() const {
    Settings out;
    for (const auto& k : keys_) out[k.name] = k.fallback;
    if (!config_path_.empty()) {
      for (const auto& [key, value] : read_settings_file(config_path_)) {
        if (key == "command") {
          if (value != name_) throw InvalidArgument("config file is for '" + value + "', not '" + name_ + "'");
          continue;
        }
        if (!out.contains(key)) throw InvalidArgument("unknown key '" + key + "' for " + name_);
        out[key] = value;
      }
    }
    for (const auto& k : keys_) {
      if (sub_->count(flag_of(k.name)) > 0) out[k.name] = flags_.at(k.name);
    }
    return out;
  }

  void write_resolved(Settings settings) const {
    std::filesystem::create_directories(outdir_);
    settings["command"] = name_;
    std::ofstream out(path("config.resolved"));
    if (!out) throw InvalidArgument("cannot write to " + outdir_);
    write_settings(settings, out);
  }

  std::string path(const std::string& file) const { return (std::filesystem::path(outdir_) / file).string(); }

 private:
  std::string name_;
  std::vector<Key> keys_;
  CLI::App* sub_ = nullptr;
  std::string config_path_;
  std::string outdir_ = ".";
  std::map<std::string, std::string> flags_;
};

/// Hash of everything that determines the output.
std::string settings_hash(Settings s, const std::string& command) {
  s.erase("threads");
  s["command"] = command;
  std::ostringstream text;
  write_settings(s, text);
  return fnv1a_hex(text.str());
}

std::ofstream open_output(const Command& cmd, const std::string& file) {
  std::ofstream out(cmd.path(file));
  if (!out) throw InvalidArgument("cannot write " + cmd.path(file));
  return out;
}

std::uint64_t require_seed(const Settings& s, const std::string& why) {
  const auto& text = s.at("seed");
  if (text.empty()) throw InvalidArgument("--seed is required " + why);
  return detail::parse_integer<std::uint64_t>("seed", text);
}

std::string fmt(double v) { return detail::format_double(v); }

int run_estimate(const Command& cmd) {
  Settings s = cmd.resolve();
  const bool has_data = !s.at("data").empty();
  const bool has_model = !s.at("model").empty();
  detail::require(has_data != has_model, "exactly one of --data or --model is required");

  const TestFunction f = builtin(s.at("f"));
  const EstimatorMode mode = parse_mode(s.at("mode"));
  const int m = detail::parse_integer<int>("m", s.at("m"));
  const double q = detail::parse_double("q", s.at("q"));
  const int subsets = detail::parse_integer<int>("B", s.at("B"));

  std::optional<CovarianceModel> model;
  std::optional<SampleSet> loaded;
  Index n = 0;
  if (has_model) {
    ExperimentConfig c = experiment_config_from_settings({{"model", s.at("model")}, {"basis_seed", s.at("basis_seed")}});
    model = c.model.build();
    detail::require(!s.at("n").empty(), "--n is required with --model");
    n = detail::parse_integer<Index>("n", s.at("n"));
  } else {
    loaded = read_samples_csv(s.at("data"));
    n = s.at("n").empty() ? loaded->n() : detail::parse_integer<Index>("n", s.at("n"));
    detail::require(n <= loaded->n(), "--n exceeds the number of rows in --data");
    s["n"] = std::to_string(n);
  }
  detail::require(n >= 1, "n must be >= 1");
  const AggregationScheme scheme = mode == EstimatorMode::plugin ? AggregationScheme::from_sizes({n}) : make_scheme(m, n, q);

  std::uint64_t seed = 0;
  if (has_model) seed = require_seed(s, "to draw samples from --model");
  else if (mode == EstimatorMode::jackknife) seed = require_seed(s, "for jackknife subsets");
  cmd.write_resolved(s);

  const SampleSet data = has_model ? sample_gaussian(*model, n, seed)
                                   : (n == loaded->n() ? *loaded : SampleSet(loaded->data().topRows(n)));
  JackknifeOptions jk;
  jk.subsets_per_level = subsets;
  jk.seed = derive_seed(seed, {0x6a61636bULL});
  const double value = estimate(mode, f, data, scheme, jk);

  std::cout << "tau_hat=" << fmt(value) << " f=" << f.name() << " mode=" << to_string(mode) << " n=" << n
            << " d=" << data.dim() << "\n";
  std::cout << "sizes:";
  for (Index size : scheme.sizes) std::cout << ' ' << size;
  std::cout << "\nsum |C_j|: " << fmt(scheme.sum_abs_coeffs()) << "\n";
  const Vector eig = sym_eigenvalues(sample_covariance(data));
  std::cout << "effective rank of sample covariance: "
            << (eig.size() > 0 && eig(0) > 0.0 ? fmt(effective_rank(std::span<const double>(eig.data(), static_cast<std::size_t>(eig.size())))) : "undefined")
            << "\n";
  if (model) {
    const double truth = tau_f(f, model->eigenvalues());
    std::cout << "tau_f(Sigma): " << fmt(truth) << "  error: " << fmt(value - truth) << "\n";
    std::cout << "effective rank of Sigma: " << fmt(effective_rank(*model)) << "\n";
    const auto b = rate_budget(f, *model, n, std::max(m, 2));
    std::cout << "rate budget: main=" << fmt(b.main_term) << " linear=" << fmt(b.linear_residual)
              << " bias=" << fmt(b.bias_term) << " total=" << fmt(b.total) << "\n";
  }
  return 0;
}

int run_coeffs(const Command& cmd) {
  const Settings s = cmd.resolve();
  const int m = detail::parse_integer<int>("m", s.at("m"));
  const Index n = detail::parse_integer<Index>("n", s.at("n"));
  const double q = detail::parse_double("q", s.at("q"));
  const auto scheme = make_scheme(m, n, q);
  cmd.write_resolved(s);
  std::string sizes;
  std::string coeffs;
  for (std::size_t j = 0; j < scheme.sizes.size(); ++j) {
    sizes += (j ? "," : "") + std::to_string(scheme.sizes[j]);
    coeffs += (j ? "," : "") + fmt(scheme.coeffs[j]);
  }
  const auto defects = coefficient_defects(scheme.sizes, scheme.coeffs);
  std::cout << "sizes=" << sizes << "\n";
  std::cout << "coeffs=" << coeffs << "\n";
  std::cout << "sum_abs_coeffs=" << fmt(scheme.sum_abs_coeffs()) << "\n";
  std::cout << "defects: sum=" << fmt(defects.sum) << " moments=" << fmt(defects.moments)
            << " closed_vs_system=" << fmt(defects.closed_vs_system) << "\n";
  return 0;
}

ExperimentConfig experiment_from(const Settings& s, const std::string& why) {
  ExperimentConfig c = experiment_config_from_settings(s);
  c.seed = require_seed(s, why);
  return c;
}

int run_rates(const Command& cmd) {
  const Settings s = cmd.resolve();
  const ExperimentConfig c = experiment_from(s, "for the rate sweep");
  detail::require(!c.n_list.empty(), "--n-list is required (comma separated)");
  cmd.write_resolved(s);
  const auto sweep = rate_sweep(c);
  const std::string hash = settings_hash(s, cmd.name());
  auto out = open_output(cmd, "rates_" + hash + ".csv");
  out << "n,rmse,bias,bias_se\n";
  for (const auto& row : sweep.rows) {
    out << row.n << ',' << fmt(row.rmse) << ',' << fmt(row.bias) << ',' << fmt(row.bias_se) << '\n';
    std::cout << "n=" << row.n << " rmse=" << fmt(row.rmse) << " bias=" << fmt(row.bias) << " se=" << fmt(row.bias_se) << "\n";
  }
  std::cout << "slope=" << fmt(sweep.slope) << " slope_se=" << fmt(sweep.slope_se) << " intercept=" << fmt(sweep.intercept) << "\n";
  std::cout << "wrote " << cmd.path("rates_" + hash + ".csv") << "\n";
  return 0;
}

int run_normality(const Command& cmd) {
  const Settings s = cmd.resolve();
  const ExperimentConfig c = experiment_from(s, "for the normality check");
  cmd.write_resolved(s);
  const auto report = normality_check(c);
  const std::string hash = settings_hash(s, cmd.name());
  {
    auto out = open_output(cmd, "replicates_" + hash + ".csv");
    write_replicates_csv(report.result, out);
  }
  {
    auto out = open_output(cmd, "summary_" + hash + ".csv");
    write_summary_csv(report.result.summary, out);
  }
  {
    auto out = open_output(cmd, "qq_" + hash + ".csv");
    write_qq_csv(report.qq, out);
  }
  const auto& sum = report.result.summary;
  std::cout << "ks=" << fmt(report.ks) << " w1=" << fmt(report.w1) << " standardized_variance=" << fmt(sum.standardized_variance)
            << " bias=" << fmt(sum.bias) << " bias_se=" << fmt(sum.bias_se) << " rmse=" << fmt(sum.rmse) << "\n";
  std::cout << "wrote replicates_, summary_ and qq_" << hash << ".csv in " << cmd.outdir() << "\n";
  return 0;
}

int run_supnorm(const Command& cmd) {
  const Settings s = cmd.resolve();
  const ExperimentConfig c = experiment_from(s, "for the sup-norm experiment");
  const int order = detail::parse_integer<int>("grid_order", s.at("grid_order"));
  FunctionClassGrid grid;
  if (!s.at("grid_file").empty()) {
    std::ifstream in(s.at("grid_file"));
    if (!in) throw InvalidArgument("cannot open grid file: " + s.at("grid_file"));
    grid = read_grid_csv(in, order);
  } else {
    const int size = detail::parse_integer<int>("grid_size", s.at("grid_size"));
    grid = default_grid(order, size, derive_seed(c.seed, {0x67726964ULL}));
  }
  cmd.write_resolved(s);
  const auto result = supnorm_experiment(grid, c);
  const std::string hash = settings_hash(s, cmd.name());
  {
    auto out = open_output(cmd, "grid_" + hash + ".csv");
    write_grid_csv(grid, out);
  }
  {
    auto out = open_output(cmd, "supnorm_" + hash + ".csv");
    out << "function,truth,rmse\n";
    for (std::size_t j = 0; j < result.names.size(); ++j)
      out << result.names[j] << ',' << fmt(result.truths[j]) << ',' << fmt(result.rmse[j]) << '\n';
  }
  {
    auto out = open_output(cmd, "supnorm_max_" + hash + ".csv");
    out << "replicate,max_error\n";
    for (std::size_t i = 0; i < result.max_errors.size(); ++i) out << i << ',' << fmt(result.max_errors[i]) << '\n';
  }
  double worst_rmse = 0.0;
  for (double r : result.rmse) worst_rmse = std::max(worst_rmse, r);
  std::cout << "mean_max_error=" << fmt(result.mean_max_error) << " rms_max_error=" << fmt(result.rms_max_error)
            << " max_single_rmse=" << fmt(worst_rmse) << " functions=" << result.names.size() << "\n";
  std::cout << "wrote grid_, supnorm_ and supnorm_max_" << hash << ".csv in " << cmd.outdir() << "\n";
  return 0;
}

int run_mp_compare(const Command& cmd) {
  Settings s = cmd.resolve();
  const Index d = detail::parse_integer<Index>("d", s.at("d"));
  const Index n = detail::parse_integer<Index>("n", s.at("n"));
  detail::require(d >= 50 && n >= 50, "mp-compare needs d >= 50 and n >= 50");
  const double ratio = static_cast<double>(d) / static_cast<double>(n);
  if (s.at("gamma").empty()) s["gamma"] = fmt(ratio);
  const double gamma = detail::parse_double("gamma", s.at("gamma"));
  const MarchenkoPastur law(gamma);
  if (std::abs(gamma - ratio) > 0.1 * ratio) {
    std::cerr << "warning: gamma=" << fmt(gamma) << " differs from d/n=" << fmt(ratio) << " by more than 10%\n";
  }
  const std::uint64_t seed = require_seed(s, "to draw the sample");
  cmd.write_resolved(s);

  const Vector eig = sym_eigenvalues(sample_covariance(sample_gaussian(CovarianceModel::identity(d), n, seed)));
  std::vector<double> values(eig.data(), eig.data() + eig.size());
  const double ks = esd_ks_distance(values, law);
  std::sort(values.begin(), values.end());

  const std::string hash = settings_hash(s, cmd.name());
  auto out = open_output(cmd, "mp_" + hash + ".csv");
  out << "x,esd_cdf,mp_cdf\n";
  const double hi = 1.05 * std::max(law.upper(), values.back());
  const int points = 400;
  for (int i = 0; i <= points; ++i) {
    const double x = hi * i / points;
    const auto below = std::upper_bound(values.begin(), values.end(), x) - values.begin();
    out << fmt(x) << ',' << fmt(static_cast<double>(below) / static_cast<double>(values.size())) << ',' << fmt(law.cdf(x)) << '\n';
  }
  std::cout << "ks=" << fmt(ks) << " gamma=" << fmt(gamma) << " d=" << d << " n=" << n << " support=[" << fmt(law.lower())
            << "," << fmt(law.upper()) << "]\n";
  std::cout << "wrote " << cmd.path("mp_" + hash + ".csv") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trace functionals of covariance matrices: estimators and Monte Carlo checks"};
  app.require_subcommand(1);

  std::vector<Key> estimate_keys = {
      {"data", "", "CSV of observations, one row each"},
      {"model", "", "eigenvalue profile to sample from: identity:d, poly:d:beta or custom:v1,..."},
      {"basis_seed", "none", "seed of a random orthogonal eigenbasis for --model, or none"},
      {"f", "identity", "test function"},
      {"mode", "plugin", "plugin, aggregate or jackknife"},
      {"m", "2", "number of aggregation levels"},
      {"q", "2", "ratio between consecutive subsample sizes"},
      {"B", "50", "random subsets per level (jackknife)"},
      {"n", "", "sample size (default: all rows of --data)"},
      {"seed", "", "seed for sampling and jackknife subsets"},
  };
  auto with = [](std::vector<Key> keys, std::vector<Key> extra) {
    keys.insert(keys.end(), extra.begin(), extra.end());
    return keys;
  };

  using Handler = int (*)(const Command&);
  std::vector<std::pair<std::unique_ptr<Command>, Handler>> commands;
  auto add = [&](std::string name, std::string description, std::vector<Key> keys, Handler handler) {
    commands.emplace_back(std::make_unique<Command>(app, std::move(name), std::move(description), std::move(keys)), handler);
  };
  add("estimate", "estimate tau_f from data or a seeded model sample", estimate_keys, run_estimate);
  add("coeffs", "print the aggregation sizes and coefficients",
                                {{"m", "3", "levels"}, {"n", "400", "full sample size"}, {"q", "2", "size ratio"}},
      run_coeffs);
  add("rates", "RMSE over a list of n and the fitted log-log slope",
                                with(experiment_keys(), {{"n_list", "", "comma separated sample sizes"}}), run_rates);
  add("normality", "distance of the standardized estimator to N(0,1)", experiment_keys(), run_normality);
  add("supnorm", "errors of the signed spectral measure over a function grid",
                                with(experiment_keys(), {{"grid_order", "2", "smoothness order of the grid"},
                                                         {"grid_size", "8", "number of grid functions"},
                                                         {"grid_file", "", "grid CSV (name,kind,p1,p2,p3) instead of a generated grid"}}),
      run_supnorm);
  add("mp-compare", "sample spectrum of I_d against the Marchenko-Pastur law",
                                {{"d", "500", "dimension"}, {"n", "1000", "sample size"},
                                 {"gamma", "", "ratio of the limit law (default d/n)"}, {"seed", "", "sampling seed"}},
      run_mp_compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_invalid;
  }

  try {
    for (const auto& [cmd, handler] : commands) {
      if (cmd->app()->parsed()) return handler(*cmd);
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_invalid;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_numerical;
  }
  return exit_invalid;
}
