#include "localsgd/async_engine.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>

#include "average_tracker.hpp"
#include "localsgd/rng.hpp"

namespace localsgd {

WriteLog::WriteLog(std::size_t sequences, Step horizon)
    : sequences_(sequences), horizon_(horizon), reads_(sequences) {}

std::vector<const WriteRecord*> WriteLog::writes_of(std::size_t h) const {
  std::vector<const WriteRecord*> out;
  for (const WriteRecord& w : writes_) {
    if (w.writer == h) out.push_back(&w);
  }
  return out;
}

std::vector<Step> WriteLog::visible(Step t, std::size_t k, std::size_t h) const {
  std::vector<Step> out;
  for (const WriteRecord* w : writes_of(h)) {
    if (w->first_seen.at(k) <= t) {
      for (Step j = w->first_update; j < w->write_step; ++j) out.push_back(j);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Step WriteLog::first_missing(Step t, std::size_t k, std::size_t h) const {
  const std::vector<Step> seen = visible(t, k, h);
  Step j = 0;
  for (Step v : seen) {
    if (v != j) break;
    ++j;
  }
  return j;
}

void WriteLog::record_write(WriteRecord record) {
  record.first_seen.assign(sequences_, kNeverSeen);
  writes_.push_back(std::move(record));
}

void WriteLog::mark_seen(std::size_t write_index, std::size_t reader, Step read_step) {
  Step& seen = writes_.at(write_index).first_seen.at(reader);
  seen = std::min(seen, read_step);
}

void WriteLog::record_read(std::size_t k, Step t) { reads_.at(k).push_back(t); }

void WriteLog::finalize() {
  complete_ = true;
  for (std::size_t h = 0; h < sequences_; ++h) {
    const auto mine = writes_of(h);
    if (mine.empty() || mine.back()->write_step != horizon_) complete_ = false;
  }
}

Step measured_delay(const WriteLog& log) {
  if (!log.complete()) throw std::invalid_argument("measured_delay: incomplete write log");
  Step tau = 0;
  for (std::size_t k = 0; k < log.sequences(); ++k) {
    for (Step t : log.reads(k)) {
      if (t >= log.horizon()) continue;  // the final read feeds no later iterate
      for (std::size_t h = 0; h < log.sequences(); ++h) {
        tau = std::max(tau, t - log.first_missing(t, k, h));
      }
    }
  }
  return tau;
}

namespace {

class BlockScheduler {
 public:
  BlockScheduler(std::vector<double> speeds, std::span<const SyncSchedule> schedules,
                 bool balance)
      : speeds_(std::move(speeds)),
        schedules_(schedules),
        balance_(balance),
        progress_(schedules.size(), 0),
        sequence_busy_(schedules.size(), false),
        worker_busy_(speeds_.size(), false),
        current_(speeds_.size()) {
    if (speeds_.size() != schedules_.size()) {
      throw std::invalid_argument("async: need one speed per sequence");
    }
    for (double s : speeds_) {
      if (!(s > 0.0)) throw std::invalid_argument("async: worker speeds must be positive");
    }
  }

  double now() const { return now_; }
  const std::vector<Step>& progress() const { return progress_; }

  bool finished() const {
    for (std::size_t k = 0; k < progress_.size(); ++k) {
      if (progress_[k] < schedules_[k].horizon() || sequence_busy_[k]) return false;
    }
    return true;
  }

  std::vector<Block> start_blocks() {
    std::vector<Block> started;
    for (std::size_t p = 0; p < speeds_.size(); ++p) {
      if (worker_busy_[p]) continue;
      const auto seq = pick(p);
      if (!seq) continue;
      const std::size_t k = *seq;
      const auto& idx = schedules_[k].indices();
      const Step next = *std::upper_bound(idx.begin(), idx.end(), progress_[k]);
      Block b;
      b.worker = p;
      b.sequence = k;
      b.first_step = progress_[k];
      b.last_step = next;
      b.start_time = now_;
      b.end_time = now_ + static_cast<double>(next - progress_[k]) / speeds_[p];
      worker_busy_[p] = true;
      sequence_busy_[k] = true;
      current_[p] = b;
      started.push_back(b);
    }
    return started;
  }

  // Advances to the earliest completion time; returns every block ending then,
  // in worker order.
  std::vector<Block> complete_next() {
    double t = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < speeds_.size(); ++p) {
      if (worker_busy_[p]) t = std::min(t, current_[p].end_time);
    }
    if (t == std::numeric_limits<double>::infinity()) {
      throw std::logic_error("async scheduler: no block in flight");
    }
    now_ = t;
    std::vector<Block> done;
    for (std::size_t p = 0; p < speeds_.size(); ++p) {
      if (worker_busy_[p] && current_[p].end_time == t) {
        done.push_back(current_[p]);
        worker_busy_[p] = false;
        sequence_busy_[current_[p].sequence] = false;
        progress_[current_[p].sequence] = current_[p].last_step;
      }
    }
    const auto [lo, hi] = std::minmax_element(progress_.begin(), progress_.end());
    max_spread_ = std::max(max_spread_, *hi - *lo);
    return done;
  }

  Step max_spread() const { return max_spread_; }

 private:
  std::optional<std::size_t> pick(std::size_t worker) const {
    const auto available = [&](std::size_t k) {
      return !sequence_busy_[k] && progress_[k] < schedules_[k].horizon();
    };
    if (!balance_) {
      if (available(worker)) return worker;
      return std::nullopt;
    }
    std::optional<std::size_t> best;
    if (worker < progress_.size() && available(worker)) best = worker;
    for (std::size_t k = 0; k < progress_.size(); ++k) {
      if (!available(k)) continue;
      if (!best || progress_[k] < progress_[*best]) best = k;
    }
    return best;
  }

  std::vector<double> speeds_;
  std::span<const SyncSchedule> schedules_;
  bool balance_;
  std::vector<Step> progress_;
  std::vector<bool> sequence_busy_;
  std::vector<bool> worker_busy_;
  std::vector<Block> current_;
  double now_ = 0.0;
  Step max_spread_ = 0;
};

std::vector<double> resolve_speeds(const ExecutionModel& execution, std::size_t K) {
  if (execution.speeds.empty()) return std::vector<double>(K, 1.0);
  return execution.speeds;
}

}  // namespace

AssignmentPlan load_balanced_assignment(std::span<const double> speeds, Step H, Step T) {
  if (speeds.empty()) throw std::invalid_argument("load_balanced_assignment: no workers");
  std::vector<SyncSchedule> schedules(speeds.size(), regular_sync_schedule(T, H));
  BlockScheduler scheduler(std::vector<double>(speeds.begin(), speeds.end()), schedules, true);
  AssignmentPlan plan;
  for (const Block& b : scheduler.start_blocks()) plan.blocks.push_back(b);
  while (!scheduler.finished()) {
    scheduler.complete_next();
    for (const Block& b : scheduler.start_blocks()) plan.blocks.push_back(b);
  }
  plan.lag_bound = scheduler.max_spread() + H;
  return plan;
}

namespace {

struct Sequence {
  Vector x;       // current iterate (pre-read value at the end of a block)
  Vector x_read;  // value obtained at the last read
  Rng rng;
  WeightedAccumulator output;
  std::deque<Vector> trajectory;  // x_t^k for t ≥ finalized step
  struct Pending {
    std::size_t write;
    double visible_at;
  };
  std::vector<Pending> pending;
  std::vector<std::size_t> prefix;  // per writer h: contiguous visible writes of h
};

}  // namespace

AsyncRun run_async_local_sgd(const RunConfig& config, std::span<const SyncSchedule> schedules,
                             const DelayModel& delay, const Objective& objective,
                             const ExecutionModel& execution) {
  const std::size_t K = config.workers;
  if (K < 1) throw std::invalid_argument("async: K must be >= 1");
  if (config.steps < 1 || config.batch < 1) {
    throw std::invalid_argument("async: T and b must be >= 1");
  }
  if (schedules.size() != K) throw std::invalid_argument("async: need one sync schedule per worker");
  Step max_gap = 0;
  for (const SyncSchedule& s : schedules) {
    if (s.horizon() != config.steps) {
      throw std::invalid_argument("async: every schedule must contain T as its last index");
    }
    max_gap = std::max(max_gap, s.max_gap());
  }
  if (delay.tau < 0) throw std::invalid_argument("async: delay tau must be >= 0");
  if (config.constants && config.stepsize.kind() == StepKind::kTheoremDecay) {
    const double bound = std::max(16.0 * config.constants->kappa(),
                                  static_cast<double>(max_gap + delay.tau));
    if (config.stepsize.shift() < bound) {
      throw std::invalid_argument("async: theorem-decay shift violates a >= max{16 kappa, H + tau} = " +
                                  std::to_string(bound));
    }
  }

  const std::size_t d = objective.dimension();
  const std::size_t n = objective.components();
  const Step T = config.steps;
  const double inv_k = 1.0 / static_cast<double>(K);
  const double inv_b = 1.0 / static_cast<double>(config.batch);
  const double output_shift = config.resolved_output_shift();
  const Vector x0 = config.initial_point(d);
  const RecordOptions& rec = config.record;

  AsyncRun run{RunTrace{}, WriteLog(K, T), {}, {}};
  RunTrace& trace = run.trace;
  WriteLog& log = run.log;
  detail::AverageTracker tracker(objective, config);

  std::vector<Sequence> seqs;
  seqs.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    Sequence s{x0, x0, worker_stream(config.seed, k), WeightedAccumulator(d), {}, {}, {}};
    s.trajectory.push_back(x0);
    s.prefix.assign(K, 0);
    seqs.push_back(std::move(s));
    log.record_read(k, 0);
  }
  std::vector<std::vector<std::size_t>> writes_by_writer(K);
  std::vector<Vector> deltas;
  std::vector<std::size_t> unseen_readers;
  Vector aggregate = x0;

  // Σ_h η_j g_j^h for unfinalized j, starting at `update_base`.
  std::deque<Vector> updates;
  Step update_base = 0;
  Vector x_bar = x0;
  Step finalized = -1;  // largest t whose x̄_t and x_t^k are final
  bool stop = false;

  Rng delay_rng = substream(delay.seed, kDelayStreamTag);
  const auto lag = [&]() -> double {
    switch (delay.kind) {
      case DelayKind::kZero:
        return 0.0;
      case DelayKind::kFixed:
        return static_cast<double>(delay.tau);
      case DelayKind::kRandomBounded:
        return static_cast<double>(
            std::uniform_int_distribution<Step>(0, delay.tau)(delay_rng));
    }
    return 0.0;
  };

  const auto finalize_through = [&](Step upto) {
    while (!stop && finalized < upto) {
      const Step t = finalized + 1;
      if (t > 0) {
        axpy(-inv_k, updates.front(), x_bar);
        updates.pop_front();
        ++update_base;
      }
      if (rec.virtual_iterates) trace.virtual_iterates.push_back(x_bar);
      if (rec.worker_iterates || rec.deviation) {
        std::vector<Vector> xs;
        double dev = 0.0;
        for (Sequence& s : seqs) {
          dev += squared_distance(x_bar, s.trajectory.front());
          if (rec.worker_iterates) xs.push_back(s.trajectory.front());
        }
        if (rec.deviation) trace.deviation.push_back(dev * inv_k);
        if (rec.worker_iterates) trace.worker_iterates.push_back(std::move(xs));
      }
      for (Sequence& s : seqs) s.trajectory.pop_front();
      finalized = t;
      if (tracker.observe(t, x_bar, true)) stop = true;
    }
  };

  const auto compute_block = [&](const Block& b) {
    Sequence& s = seqs[b.sequence];
    Vector grad(d);
    for (Step t = b.first_step; t < b.last_step; ++t) {
      if (t < T) s.output.add(averaging_weight(AveragingKind::kQuadratic, t, output_shift), s.x);
      const double eta = config.stepsize.at(t);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t j = 0; j < config.batch; ++j) {
        objective.add_component_gradient(s.x, uniform_index(s.rng, n), inv_b, grad);
      }
      axpy(-eta, grad, s.x);
      const auto slot = static_cast<std::size_t>(t - update_base);
      while (updates.size() <= slot) updates.emplace_back(d, 0.0);
      axpy(eta, grad, updates[slot]);
      s.trajectory.push_back(s.x);
    }
  };

  BlockScheduler scheduler(resolve_speeds(execution, K), schedules, execution.load_balance);
  for (const Block& b : scheduler.start_blocks()) {
    run.blocks.push_back(b);
    compute_block(b);
  }
  finalize_through(0);

  while (!stop && !scheduler.finished()) {
    const std::vector<Block> done = scheduler.complete_next();
    const double now = scheduler.now();
    for (const Block& b : done) {
      Sequence& s = seqs[b.sequence];
      Vector delta(d);
      for (std::size_t j = 0; j < d; ++j) delta[j] = inv_k * (s.x[j] - s.x_read[j]);
      axpy(1.0, delta, aggregate);
      const std::size_t index = log.writes().size();
      log.record_write(WriteRecord{b.sequence, b.last_step, b.first_step, now, {}});
      writes_by_writer[b.sequence].push_back(index);
      deltas.push_back(std::move(delta));
      unseen_readers.push_back(K - 1);
      for (std::size_t k = 0; k < K; ++k) {
        if (k != b.sequence) seqs[k].pending.push_back({index, now + lag()});
      }
    }
    for (const Block& b : done) {
      const std::size_t k = b.sequence;
      Sequence& s = seqs[k];
      const Step t = b.last_step;
      Vector next(d);
      for (std::size_t j = 0; j < d; ++j) next[j] = inv_k * s.x[j] + (1.0 - inv_k) * s.x_read[j];
      const std::size_t own = writes_by_writer[k].back();
      log.mark_seen(own, k, t);
      s.prefix[k] = writes_by_writer[k].size();
      std::vector<Sequence::Pending> still;
      for (const Sequence::Pending& p : s.pending) {
        if (p.visible_at <= now) {
          axpy(1.0, deltas[p.write], next);
          log.mark_seen(p.write, k, t);
          if (--unseen_readers[p.write] == 0) Vector().swap(deltas[p.write]);
        } else {
          still.push_back(p);
        }
      }
      s.pending = std::move(still);
      log.record_read(k, t);

      if (execution.max_staleness && t < T) {
        for (std::size_t h = 0; h < K; ++h) {
          const auto& mine = writes_by_writer[h];
          std::size_t& pre = s.prefix[h];
          while (pre < mine.size() && log.writes()[mine[pre]].first_seen[k] <= t) ++pre;
          const Step covered = pre == 0 ? 0 : log.writes()[mine[pre - 1]].write_step;
          if (t - covered > *execution.max_staleness) {
            throw std::runtime_error(
                "async: delay bound violated: sequence " + std::to_string(k) + " read at t=" +
                std::to_string(t) + " sees updates of sequence " + std::to_string(h) +
                " only below j=" + std::to_string(covered) + " (staleness " +
                std::to_string(t - covered) + " > tau=" +
                std::to_string(*execution.max_staleness) + ")");
          }
        }
      }

      s.x = next;
      s.x_read = next;
      s.trajectory.back() = next;
      ++trace.communication_rounds;
    }
    const auto& progress = scheduler.progress();
    finalize_through(*std::min_element(progress.begin(), progress.end()));
    if (stop) break;
    for (const Block& b : scheduler.start_blocks()) {
      run.blocks.push_back(b);
      compute_block(b);
    }
  }

  log.finalize();
  trace.steps_completed = finalized;
  tracker.finish(trace);
  WeightedAccumulator output(d);
  for (const Sequence& s : seqs) {
    if (!s.output.empty()) output.add(s.output.total_weight(), s.output.value());
  }
  if (!output.empty()) trace.output_average = output.value();
  trace.output_shift = output_shift;
  for (const Sequence& s : seqs) trace.final_workers.push_back(s.x);
  run.aggregate = aggregate;
  return run;
}

}  // namespace localsgd
