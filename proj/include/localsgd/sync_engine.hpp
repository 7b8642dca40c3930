#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "localsgd/averaging.hpp"
#include "localsgd/linalg.hpp"
#include "localsgd/objective.hpp"
#include "localsgd/rng.hpp"
#include "localsgd/schedules.hpp"

namespace localsgd {

// Which per-step quantities a run keeps.
struct RecordOptions {
  bool virtual_iterates = false;  // x̄_t for t = 0..T
  bool worker_iterates = false;   // x_t^k for t = 0..T (indexed [t][k])
  bool deviation = false;         // (1/K) Σ_k ‖x̄_t − x_t^k‖² for t = 0..T
  bool gradient_noise = false;    // ‖g_t − ḡ_t‖² for t < T (full gradients each step)
  bool function_values = true;    // f of the four tracked averages at evaluation steps
  // Evaluate at sync indices at least this many steps apart (plus t = 0 and the
  // final step). 0 picks ⌈T/1000⌉.
  Step eval_stride = 0;
};

// Stop a run once any tracked average reaches f − f★ ≤ ε.
struct AccuracyTarget {
  double f_star = 0.0;
  double epsilon = 0.0;
};

struct RunConfig {
  RunConfig(std::size_t workers, Step steps, std::size_t batch, SyncSchedule sync,
            StepSchedule stepsize, std::uint64_t seed);

  std::size_t workers;
  Step steps;
  std::size_t batch;
  SyncSchedule sync;
  StepSchedule stepsize;
  std::uint64_t seed;
  RecordOptions record;
  Vector x0;  // empty means the origin
  std::optional<AccuracyTarget> stop_at;
  // When set, theorem-decay stepsizes are checked against a ≥ max{16κ, H}.
  std::optional<ProblemConstants> constants;
  // Shift of the quadratic weights for the output average x̂_T; 0 uses the
  // theorem-decay shift, or 1 for other step families.
  double output_shift = 0.0;

  double resolved_output_shift() const;
  Vector initial_point(std::size_t dimension) const;
  // Throws std::invalid_argument naming the violated constraint.
  void validate(const Objective& objective) const;
};

struct WorkerState {
  std::size_t k = 0;
  Vector x;
  Rng rng;
};

std::vector<WorkerState> initial_states(const RunConfig& config, const Objective& objective);

struct StepGradients {
  Vector g;      // (1/K) Σ_k mini-batch gradient of worker k
  Vector g_bar;  // (1/K) Σ_k ∇f(x_t^k); empty unless requested
};

// One local step on every worker (no averaging).
StepGradients step_once(std::span<WorkerState> states, Step t, const RunConfig& config,
                        const Objective& objective, bool exact_gradients = false);

// Mean of the worker iterates in ascending worker order.
Vector virtual_average(std::span<const WorkerState> states);

struct EvalPoint {
  Step t = 0;
  std::array<double, 4> f{};  // last, uniform, linear, quadratic
};

struct RunTrace {
  std::vector<Vector> virtual_iterates;
  std::vector<std::vector<Vector>> worker_iterates;
  std::vector<double> deviation;
  std::vector<double> gradient_noise;
  std::vector<EvalPoint> evaluations;
  std::array<Vector, 4> final_averages;
  Vector output_average;  // x̂ with weights (shift + t)², t < steps completed
  double output_shift = 1.0;
  std::vector<Vector> final_workers;
  Step communication_rounds = 0;
  Step steps_completed = 0;
  bool reached_target = false;
  bool diverged = false;
};

RunTrace run_local_sgd(const RunConfig& config, const Objective& objective);

// Smallest evaluated t at which some tracked average has f − f★ ≤ ε.
std::optional<Step> iterations_to_accuracy(const RunTrace& trace, double epsilon, double f_star);

// Function values of the four tracked averages, evaluated with `objective`.
EvalPoint evaluate_averages(const Objective& objective, std::span<const RunningAverage> averages,
                            Step t);

}  // namespace localsgd
