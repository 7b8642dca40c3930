#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "localsgd/objective.hpp"
#include "localsgd/schedules.hpp"
#include "localsgd/sync_engine.hpp"

namespace localsgd {

enum class DelayKind { kZero, kFixed, kRandomBounded };

// Lag, in wall-clock ticks, between a write to the aggregate and the moment
// another worker's read can see it. One tick is one local step of a
// unit-speed worker. A worker always sees its own writes immediately.
struct DelayModel {
  DelayKind kind = DelayKind::kZero;
  Step tau = 0;
  std::uint64_t seed = 0;

  static DelayModel zero() { return {}; }
  static DelayModel fixed(Step tau) { return {DelayKind::kFixed, tau, 0}; }
  static DelayModel random_bounded(Step tau, std::uint64_t seed) {
    return {DelayKind::kRandomBounded, tau, seed};
  }
};

inline constexpr Step kNeverSeen = std::numeric_limits<Step>::max();

struct WriteRecord {
  std::size_t writer = 0;    // sequence h
  Step write_step = 0;       // s: carries updates j ∈ [first_update, s)
  Step first_update = 0;
  double wall_time = 0.0;
  // Per reader k: logical step of k's first read that saw this write.
  std::vector<Step> first_seen;
};

// Realized write visibility of an asynchronous run.
class WriteLog {
 public:
  explicit WriteLog(std::size_t sequences = 0, Step horizon = 0);

  std::size_t sequences() const { return sequences_; }
  Step horizon() const { return horizon_; }
  const std::vector<WriteRecord>& writes() const { return writes_; }
  // Logical steps at which sequence k read the aggregate (0 is the initial read).
  const std::vector<Step>& reads(std::size_t k) const { return reads_.at(k); }
  bool complete() const { return complete_; }

  // Writes of sequence h in write order.
  std::vector<const WriteRecord*> writes_of(std::size_t h) const;
  // W_t^{k,h}: update indices of sequence h visible to k's read at step t.
  std::vector<Step> visible(Step t, std::size_t k, std::size_t h) const;
  // Smallest update index of h not visible to k's read at step t.
  Step first_missing(Step t, std::size_t k, std::size_t h) const;

  void record_write(WriteRecord record);
  void mark_seen(std::size_t write_index, std::size_t reader, Step read_step);
  void record_read(std::size_t k, Step t);
  void finalize();

 private:
  std::size_t sequences_;
  Step horizon_;
  std::vector<WriteRecord> writes_;
  std::vector<std::vector<Step>> reads_;
  bool complete_ = false;
};

// Smallest τ with W_t^{k,h} ⊇ {j < t − τ} at every read t < T of every
// sequence k, for every h.
Step measured_delay(const WriteLog& log);

// One H-step (or sync-gap) chunk of a sequence executed by a physical worker.
struct Block {
  std::size_t worker = 0;
  std::size_t sequence = 0;
  Step first_step = 0;  // logical step at which the block reads its start point
  Step last_step = 0;   // next sync index of the sequence: write + read happen here
  double start_time = 0.0;
  double end_time = 0.0;
};

struct AssignmentPlan {
  std::vector<Block> blocks;  // in start order
  Step lag_bound = 0;
};

// Assigns sequences to physical workers in H-step blocks: a free worker takes
// the least advanced idle sequence (ties: its own, then the lowest id). One
// sequence per worker. `lag_bound` is H plus the largest spread of written
// progress between sequences seen at block boundaries.
AssignmentPlan load_balanced_assignment(std::span<const double> speeds, Step H, Step T);

struct ExecutionModel {
  std::vector<double> speeds;  // steps per tick, per physical worker; empty = all 1
  bool load_balance = false;
  // Abort when a read sees staleness above this bound.
  std::optional<Step> max_staleness;
};

struct AsyncRun {
  RunTrace trace;
  WriteLog log;
  std::vector<Block> blocks;
  Vector aggregate;  // x0 plus every write
};

// Asynchronous local SGD over a wall-clock event simulation. Each sequence k
// writes (1/K)(x_s^k − x_r^k) to the aggregate at its sync indices and reads
// back the aggregate as seen under the delay model. The trace's virtual
// iterates are x̄_t = x0 − (1/K) Σ_h Σ_{j<t} η_j g_j^h; deviation compares them
// with the per-sequence iterates.
AsyncRun run_async_local_sgd(const RunConfig& config, std::span<const SyncSchedule> schedules,
                             const DelayModel& delay, const Objective& objective,
                             const ExecutionModel& execution = {});

}  // namespace localsgd
