#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "localsgd/dataset.hpp"
#include "localsgd/harness.hpp"
#include "localsgd/lemmas.hpp"
#include "localsgd/theory.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kUnreachable = 2;
constexpr int kLemmaFailure = 3;

int run_command(const std::string& path) {
  const localsgd::ExperimentResult result = localsgd::run_experiment(path);
  std::size_t unreachable = 0;
  for (const auto& row : result.rows) unreachable += row.choice ? 0 : 1;
  std::cout << "f* = " << result.f_star << "; " << result.rows.size() << " rows";
  if (unreachable > 0) std::cout << ", " << unreachable << " unreachable within the step cap";
  std::cout << '\n';
  return result.any_unreachable ? kUnreachable : kOk;
}

int verify_command(const std::string& path) {
  const auto reports = localsgd::run_lemma_suite(localsgd::load_lemma_config(path));
  bool ok = true;
  for (const auto& r : reports) {
    std::cout << r << '\n';
    ok = ok && r.pass;
  }
  return ok ? kOk : kLemmaFailure;
}

int theory_command(const std::vector<std::size_t>& K, const std::vector<localsgd::Step>& H,
                   const std::vector<double>& eps, const std::vector<double>& rho,
                   const std::string& pattern) {
  localsgd::CostModel cost;
  if (pattern == "ring") {
    cost.pattern = localsgd::CommPattern::kRingAllReduce;
  } else if (pattern != "pairwise") {
    throw localsgd::ConfigError("pattern", "expected pairwise or ring");
  }
  std::cout << localsgd::kTheoryHeader << '\n';
  for (double r : rho) {
    cost.rho = r;
    cost.validate();
    std::ostringstream body;
    localsgd::write_theory_csv(body, K, H, eps, cost);
    const std::string text = body.str();
    std::cout << text.substr(text.find('\n') + 1);
  }
  return kOk;
}

int fstar_command(const std::string& path, std::optional<double> lambda, double tolerance) {
  const localsgd::Dataset data = localsgd::load_libsvm(path);
  const double l = lambda.value_or(data.default_lambda());
  const auto sol = localsgd::compute_reference_fstar(data, l, tolerance);
  std::printf("n=%zu d=%zu lambda=%.17g\nf*=%.15f\n|grad f(x*)|=%.3e\n", data.size(),
              data.dimension(), l, sol.f_star, sol.gradient_norm);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local SGD simulation, lemma checks and speedup experiments"};
  app.require_subcommand(1);

  std::string run_path;
  auto* run = app.add_subcommand("run", "run an experiment sweep from an INI config");
  run->add_option("config", run_path, "experiment config file")->required();

  std::string verify_path;
  auto* verify = app.add_subcommand("verify-lemmas", "run the lemma checks from an INI config");
  verify->add_option("config", verify_path, "lemma config file")->required();

  std::vector<std::size_t> K{1, 2, 4, 8, 16, 32, 64};
  std::vector<localsgd::Step> H{1, 2, 4, 8, 16};
  std::vector<double> eps{0.0};
  std::vector<double> rho{25.0};
  std::string pattern = "pairwise";
  auto* theory = app.add_subcommand("theory", "print the modeled speedup S(K) as CSV");
  theory->add_option("--K", K, "worker counts")->delimiter(',');
  theory->add_option("--H", H, "local step counts")->delimiter(',');
  theory->add_option("--eps", eps, "target accuracies")->delimiter(',');
  theory->add_option("--rho", rho, "communication to computation ratios")->delimiter(',');
  theory->add_option("--pattern", pattern, "pairwise or ring");

  std::string dataset;
  std::optional<double> lambda;
  double tolerance = 1e-10;
  auto* fstar = app.add_subcommand("fstar", "compute f* of L2-regularized logistic regression");
  fstar->add_option("dataset", dataset, "LIBSVM file")->required();
  fstar->add_option("--lambda", lambda, "regularization (default 1/n)");
  fstar->add_option("--tol", tolerance, "gradient norm tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return run_command(run_path);
    if (*verify) return verify_command(verify_path);
    if (*theory) return theory_command(K, H, eps, rho, pattern);
    if (*fstar) return fstar_command(dataset, lambda, tolerance);
  } catch (const localsgd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const localsgd::ParseError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
