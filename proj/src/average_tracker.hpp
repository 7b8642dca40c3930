#pragma once

#include <vector>

#include "localsgd/averaging.hpp"
#include "localsgd/objective.hpp"
#include "localsgd/sync_engine.hpp"

namespace localsgd::detail {

// Feeds the virtual sequence x̄_t into the four tracked running averages and
// the output average, and evaluates f at the configured cadence.
class AverageTracker {
 public:
  AverageTracker(const Objective& objective, const RunConfig& config);

  // Returns true when the run should stop (target reached or diverged).
  bool observe(Step t, std::span<const double> x_bar, bool eval_eligible);
  void finish(RunTrace& trace) const;

  bool reached() const { return reached_; }
  bool diverged() const { return diverged_; }

 private:
  void evaluate(Step t);

  const Objective& objective_;
  const RunConfig& config_;
  Step stride_;
  Step last_eval_ = -1;
  double initial_gap_ = 0.0;
  std::vector<RunningAverage> averages_;
  WeightedAccumulator output_;
  double output_shift_;
  std::vector<EvalPoint> evaluations_;
  bool reached_ = false;
  bool diverged_ = false;
};

}  // namespace localsgd::detail
