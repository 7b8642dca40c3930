#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "localsgd/async_engine.hpp"
#include "localsgd/objective.hpp"
#include "localsgd/sync_engine.hpp"

namespace localsgd {

// Outcome of one inequality check. Expectations are tested one-sided:
// pass ⇔ statistic ≤ bound + 3·stderr at every checked step. Per-step checks
// report the first violating step, or the worst step when none violates.
struct CheckReport {
  std::string lemma;
  std::size_t trials = 0;
  double statistic = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // bound − statistic
  double stderr_ = 0.0;
  bool pass = false;
  std::optional<Step> worst_step;
  std::optional<Step> first_violation;
  // Exact reference value of the statistic when one is available.
  std::optional<double> exact;
  std::string detail;

  bool consistent() const;
};

inline constexpr double kStderrMultiplier = 3.0;

std::ostream& operator<<(std::ostream& out, const CheckReport& report);
void write_reports_csv(std::ostream& out, std::span<const CheckReport> reports);

struct TrajectoryMoments {
  double sigma2 = 0.0;  // max over points of E_i‖∇f_i(x) − ∇f(x)‖²
  double G2 = 0.0;      // max over points of E_i‖∇f_i(x)‖²
  std::size_t points = 0;
};

// Exact-enumeration moments over every x_t^k (t < T) of the given traces.
TrajectoryMoments trajectory_moments(const Objective& objective,
                                     std::span<const RunTrace> traces);

// (1/K²) Σ_k Var_k / b, the exact value of E‖g − ḡ‖² for independent workers
// at fixed iterates.
double exact_variance_reduction(const Objective& objective, std::span<const Vector> states,
                                std::size_t batch = 1);

// E‖g − ḡ‖² ≤ σ̂²_max/(K b) at fixed worker iterates, by `trials` resamples.
CheckReport check_variance_reduction(const Objective& objective, std::span<const Vector> states,
                                     std::size_t trials, std::uint64_t seed,
                                     std::size_t batch = 1);

// How many seeded replicates a trajectory check uses: `runs` tested seeds and
// `held_out` further seeds whose trajectories give σ² and G².
struct MonteCarloPlan {
  std::size_t runs = 1000;
  std::size_t held_out = 20;
};

// (1/K) Σ_k E‖x̄_t − x_t^k‖² ≤ 4 η_t² G² H² for every t ≤ T. Requires
// theorem-decay stepsizes with a ≥ H. Uses μ and L of `constants`; G² comes
// from held-out trajectories.
CheckReport check_deviation_bound(const RunConfig& config, const Objective& objective,
                                  const ProblemConstants& constants,
                                  const MonteCarloPlan& plan = {});

// Per-step perturbed iterate inequality for the virtual sequence, tested on
// the mean of per-run differences (both sides from the same runs). Requires
// η_t ≤ 1/(4L) for all t.
CheckReport check_perturbed_inequality(const RunConfig& config, const Objective& objective,
                                       const ProblemConstants& constants,
                                       const ReferenceSolution& solution,
                                       const MonteCarloPlan& plan = {});

struct RecursionParams {
  double shift = 0.0;  // a
  double mu = 0.0;
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  Step T = 0;

  double eta(Step t) const { return 4.0 / (mu * (shift + static_cast<double>(t))); }
  // (1 − μη_t) a_t + η_t² B + η_t³ C: the recursion's right side without the e_t term.
  double drift(Step t, double a_t) const;
};

struct RecursionSequences {
  std::vector<double> a;  // a_0..a_T
  std::vector<double> e;  // e_0..e_{T−1}
};

using RecursionBuilder = std::function<RecursionSequences(const RecursionParams&)>;

// e_t is the fraction θ ∈ [0, 1] of the largest value keeping a_{t+1} ≥ 0,
// and a_{t+1} follows the recursion with equality.
RecursionBuilder equality_recursion(double a0, double theta);
// Same, with a_{t+1} lowered by a random slack in [0, slack · a_{t+1}].
RecursionBuilder slack_recursion(double a0, double theta, double slack, std::uint64_t seed);

// Deterministic check of (A/S_T) Σ w_t e_t ≤ μa³a_0/(4S_T) + 2T(T+2a)B/(μS_T)
// + 16T C/(μ²S_T) on the builder's sequences. A builder that breaks the
// recursion or nonnegativity fails the report with the first bad step.
CheckReport check_recursion_lemma(const RecursionParams& params, const RecursionBuilder& builder);

// (1/K) Σ_k E‖x̄_t − x_t^k‖² ≤ 12 η_t² G² (H+τ)² on asynchronous runs. τ is the
// largest measured delay over all runs; a ≥ H + τ is required.
CheckReport check_async_deviation(const RunConfig& config, std::span<const SyncSchedule> schedules,
                                  const DelayModel& delay, const Objective& objective,
                                  const ProblemConstants& constants,
                                  const MonteCarloPlan& plan = {},
                                  const ExecutionModel& execution = {});

}  // namespace localsgd
