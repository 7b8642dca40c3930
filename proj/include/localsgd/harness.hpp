#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "localsgd/async_engine.hpp"
#include "localsgd/lemmas.hpp"
#include "localsgd/objective.hpp"
#include "localsgd/sync_engine.hpp"
#include "localsgd/theory.hpp"

namespace localsgd {

// Invalid experiment configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& reason);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct QuadraticSpec {
  std::size_t dimension = 10;
  double mu = 1.0;
  double L = 4.0;
  std::size_t components = 100;
  double noise = 1.0;
  std::uint64_t seed = 1;
};

struct LogisticSpec {
  std::size_t examples = 50;
  std::size_t dimension = 20;
  double density = 0.3;
  double flip_probability = 0.1;
  std::uint64_t seed = 1;
};

// Where the objective comes from: a LIBSVM file (logistic, λ = 1/n unless
// given), a synthetic logistic dataset, or a synthetic quadratic.
struct ProblemSpec {
  std::string dataset_path;
  std::optional<std::size_t> declared_dimension;
  std::optional<double> lambda;
  std::optional<LogisticSpec> logistic;
  std::optional<QuadraticSpec> quadratic;
};

struct LoadedProblem {
  ObjectivePtr objective;
  std::optional<ReferenceSolution> known_solution;  // analytic x*, f★ when available
  std::optional<ProblemConstants> known_constants;
  std::string description;
};

LoadedProblem load_problem(const ProblemSpec& spec);

enum class StepFamily { kDecay, kConstant };
std::string to_string(StepFamily family);
StepSchedule make_stepsize(StepFamily family, double c, std::size_t n);

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<double> epsilons;
  std::vector<std::size_t> workers;
  std::vector<Step> local_steps;
  std::vector<std::size_t> batches;
  std::vector<StepFamily> families{StepFamily::kDecay, StepFamily::kConstant};
  int c_min_exponent = -20;
  int c_max_exponent = 20;
  int c_start_exponent = 0;
  double epochs_cap = 200.0;
  Step eval_stride = 0;  // 0: the sync engine's default cadence
  std::optional<double> f_star;
  double fstar_tolerance = 1e-10;
  CostModel cost{25.0, 0.0, CommPattern::kPairwise};
  std::uint64_t seed = 1;
  std::string output_directory = ".";
  bool svg = false;

  // Throws ConfigError naming the field.
  void validate() const;
};

// Parses the INI form:
//   [problem]  dataset, dimension, lambda, kind = quadratic | logistic, plus the
//              synthetic parameters (d, mu, L, n, noise, density, flip, seed)
//   [sweep]    epsilon, K, H, b (comma-separated lists), families, c_min, c_max,
//              c_start, epochs_cap, eval_stride, f_star, seed
//   [cost]     rho, pattern = pairwise | ring
//   [output]   directory, svg
ExperimentConfig parse_experiment_config(std::istream& in);
ExperimentConfig load_experiment_config(const std::string& path);

// Iterations-to-accuracy of one stepsize exponent; nullopt when unreachable.
using GridResponse = std::function<std::optional<Step>(int exponent)>;

struct GridChoice {
  int exponent = 0;
  Step iterations = 0;
  std::size_t evaluations = 0;  // distinct exponents tried
};

// Hill-climbs over exponents in [lo, hi] from `start` until the current
// exponent beats its neighbours at distance 1 and 2 in the order (iterations,
// exponent); unreachable counts as worse than any reachable value. When the
// whole neighbourhood is unreachable the window is scanned for a reachable
// start. nullopt when nothing in the window is reachable.
std::optional<GridChoice> select_grid_optimum(int lo, int hi, int start,
                                              const GridResponse& response);

struct CellSpec {
  std::size_t K = 1;
  Step H = 1;
  std::size_t b = 1;
  double epsilon = 0.0;
};

struct StepsizeChoice {
  StepFamily family = StepFamily::kDecay;
  double c = 0.0;
  int exponent = 0;
  Step iterations = 0;
};

// Steps allowed before a cell counts as unreachable: ⌈epochs·n/(K·b)⌉.
Step step_cap(double epochs, std::size_t n, std::size_t K, std::size_t b);

// Iterations to reach f − f★ ≤ ε for one stepsize; nullopt when the cap is
// hit first or the run diverges.
std::optional<Step> iterations_for(const Objective& objective, const CellSpec& cell,
                                   const StepSchedule& stepsize, double f_star, Step cap,
                                   std::uint64_t seed, Step eval_stride = 0);

// Best (family, c) for one cell; ties go to the smaller c, then to the
// decaying family. nullopt when no c reaches ε within the cap.
std::optional<StepsizeChoice> grid_search_stepsize(const Objective& objective,
                                                   const CellSpec& cell,
                                                   const ExperimentConfig& config, double f_star);

// Damped Newton until ‖∇f‖ ≤ tolerance.
ReferenceSolution compute_reference_fstar(const Objective& objective, double tolerance = 1e-10,
                                          int max_iterations = 100);
ReferenceSolution compute_reference_fstar(const Dataset& data, double lambda,
                                          double tolerance = 1e-10, int max_iterations = 100);

struct ResultRow {
  CellSpec cell;
  std::optional<StepsizeChoice> choice;  // empty: unreachable
  Step step_cap = 0;
  Step grad_evals = 0;
  Step rounds = 0;
  double wall_clock = 0.0;
  std::optional<double> speedup;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  double f_star = 0.0;
  bool any_unreachable = false;
};

inline constexpr const char* kResultsHeader =
    "K,H,b,epsilon,family,c,iterations,grad_evals,rounds,wall_clock,speedup,step_cap,reachable";
inline constexpr const char* kTheoryHeader = "K,H,epsilon,rho,speedup";

// Runs the sweep and writes results.csv, speedup_theory.csv and, when asked,
// speedup.svg into the output directory.
ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const std::string& config_path);

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_theory_csv(std::ostream& out, const std::vector<std::size_t>& K,
                      const std::vector<Step>& H, const std::vector<double>& epsilons,
                      const CostModel& cost);
void write_speedup_svg(std::ostream& out, const std::vector<ResultRow>& rows);

struct LemmaSuiteConfig {
  ProblemSpec problem;
  std::size_t K = 4;
  Step H = 4;
  Step T = 100;
  std::size_t b = 1;
  std::uint64_t seed = 1;
  MonteCarloPlan plan;
  std::size_t trials = 1000;  // variance-reduction resamples
  DelayKind delay = DelayKind::kFixed;
  Step tau = 2;
  // Stepsize shift a; 0 picks max{16κ, 2H + τ}, enough for the asynchronous
  // check's measured delay.
  double shift = 0.0;
  std::string output_directory;  // empty: no CSV
};

// INI form: [problem] as for experiments; [lemmas] K, H, T, b, seed, runs,
// held_out, trials, delay = zero | fixed | random, tau, shift; [output] directory.
LemmaSuiteConfig parse_lemma_config(std::istream& in);
LemmaSuiteConfig load_lemma_config(const std::string& path);

// Runs every lemma check on the configured problem with theorem-decay
// stepsizes and writes lemma_checks.csv when an output directory is set.
std::vector<CheckReport> run_lemma_suite(const LemmaSuiteConfig& config);

}  // namespace localsgd
