#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace localsgd {

using Step = std::int64_t;

// Largest difference between consecutive entries of a sorted index set.
Step gap(std::span<const Step> sorted_indices);

// Synchronization indices I_T ⊆ {1..T} with T ∈ I_T. The origin 0 is implicit
// (all sequences start synchronized) and counts for the gap but not as a
// communication round.
class SyncSchedule {
 public:
  SyncSchedule(Step horizon, std::vector<Step> indices);

  Step horizon() const { return horizon_; }
  const std::vector<Step>& indices() const { return indices_; }
  // gap({0} ∪ I_T)
  Step max_gap() const { return max_gap_; }
  bool contains(Step t) const;
  // Number of indices ≤ t.
  Step rounds_through(Step t) const;
  std::size_t rounds() const { return indices_.size(); }

 private:
  Step horizon_;
  std::vector<Step> indices_;
  Step max_gap_;
};

// {H, 2H, ...} ∪ {T}.
SyncSchedule regular_sync_schedule(Step T, Step H);
// Same as regular_sync_schedule but the first sync happens at `offset` (1 ≤ offset ≤ H).
SyncSchedule offset_sync_schedule(Step T, Step H, Step offset);

enum class StepKind { kTheoremDecay, kConstant, kExperimentDecay };

class StepSchedule {
 public:
  // η_t = 4 / (μ (a + t))
  static StepSchedule theorem_decay(double mu, double shift);
  // η_t = 32 c
  static StepSchedule constant(double c);
  // η_t = min(32, c·n / (t + 1))
  static StepSchedule experiment_decay(double c, double n);

  double at(Step t) const;
  StepKind kind() const { return kind_; }
  double shift() const { return shift_; }
  double mu() const { return mu_; }
  double c() const { return c_; }
  std::string describe() const;

 private:
  StepSchedule(StepKind kind, double mu, double shift, double c, double n);

  StepKind kind_;
  double mu_ = 0.0;
  double shift_ = 0.0;
  double c_ = 0.0;
  double n_ = 0.0;
};

inline double stepsize(Step t, const StepSchedule& schedule) { return schedule.at(t); }

// Cap on η_t from the experiment families.
inline constexpr double kStepCap = 32.0;

}  // namespace localsgd
