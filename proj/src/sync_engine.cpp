#include "localsgd/sync_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "average_tracker.hpp"

namespace localsgd {

RunConfig::RunConfig(std::size_t workers, Step steps, std::size_t batch, SyncSchedule sync,
                     StepSchedule stepsize, std::uint64_t seed)
    : workers(workers),
      steps(steps),
      batch(batch),
      sync(std::move(sync)),
      stepsize(stepsize),
      seed(seed) {}

double RunConfig::resolved_output_shift() const {
  if (output_shift > 0.0) return output_shift;
  if (stepsize.kind() == StepKind::kTheoremDecay) return stepsize.shift();
  return 1.0;
}

Vector RunConfig::initial_point(std::size_t dimension) const {
  if (x0.empty()) return Vector(dimension, 0.0);
  check_same_size(x0.size(), dimension, "initial point");
  return x0;
}

void RunConfig::validate(const Objective& objective) const {
  if (workers < 1) throw std::invalid_argument("run config: K must be >= 1");
  if (steps < 1) throw std::invalid_argument("run config: T must be >= 1");
  if (batch < 1) throw std::invalid_argument("run config: b must be >= 1");
  if (sync.horizon() != steps) {
    throw std::invalid_argument("run config: sync schedule horizon differs from T");
  }
  if (!x0.empty()) check_same_size(x0.size(), objective.dimension(), "initial point");
  if (constants && stepsize.kind() == StepKind::kTheoremDecay) {
    const double bound = std::max(16.0 * constants->kappa(), static_cast<double>(sync.max_gap()));
    if (stepsize.shift() < bound) {
      throw std::invalid_argument("run config: theorem-decay shift a=" +
                                  std::to_string(stepsize.shift()) +
                                  " violates a >= max{16 kappa, H} = " + std::to_string(bound));
    }
  }
}

std::vector<WorkerState> initial_states(const RunConfig& config, const Objective& objective) {
  std::vector<WorkerState> states;
  states.reserve(config.workers);
  const Vector x0 = config.initial_point(objective.dimension());
  for (std::size_t k = 0; k < config.workers; ++k) {
    states.push_back(WorkerState{k, x0, worker_stream(config.seed, k)});
  }
  return states;
}

StepGradients step_once(std::span<WorkerState> states, Step t, const RunConfig& config,
                        const Objective& objective, bool exact_gradients) {
  if (states.empty()) throw std::invalid_argument("step_once: no workers");
  const std::size_t d = objective.dimension();
  const std::size_t n = objective.components();
  const double eta = config.stepsize.at(t);
  const double inv_b = 1.0 / static_cast<double>(config.batch);
  const double inv_k = 1.0 / static_cast<double>(states.size());

  StepGradients out;
  out.g.assign(d, 0.0);
  if (exact_gradients) out.g_bar.assign(d, 0.0);
  Vector grad(d);
  for (WorkerState& w : states) {
    check_same_size(w.x.size(), d, "step_once worker state");
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t j = 0; j < config.batch; ++j) {
      objective.add_component_gradient(w.x, uniform_index(w.rng, n), inv_b, grad);
    }
    if (exact_gradients) axpy(inv_k, objective.gradient(w.x), out.g_bar);
    axpy(inv_k, grad, out.g);
    axpy(-eta, grad, w.x);
  }
  return out;
}

Vector virtual_average(std::span<const WorkerState> states) {
  if (states.empty()) throw std::invalid_argument("virtual_average: no workers");
  const Vector& first = states.front().x;
  if (std::all_of(states.begin() + 1, states.end(),
                  [&](const WorkerState& w) { return w.x == first; })) {
    return first;
  }
  Vector out(first.size(), 0.0);
  for (const WorkerState& w : states) axpy(1.0, w.x, out);
  scale(1.0 / static_cast<double>(states.size()), out);
  return out;
}

EvalPoint evaluate_averages(const Objective& objective, std::span<const RunningAverage> averages,
                            Step t) {
  EvalPoint p;
  p.t = t;
  for (std::size_t s = 0; s < p.f.size() && s < averages.size(); ++s) {
    const Vector& y = averages[s].value();
    p.f[s] = all_finite(y) ? objective.value(y) : std::numeric_limits<double>::infinity();
  }
  return p;
}

namespace detail {

AverageTracker::AverageTracker(const Objective& objective, const RunConfig& config)
    : objective_(objective),
      config_(config),
      stride_(config.record.eval_stride > 0 ? config.record.eval_stride
                                            : std::max<Step>(1, (config.steps + 999) / 1000)),
      output_(objective.dimension()),
      output_shift_(config.resolved_output_shift()) {
  for (AveragingKind kind : kTrackedAverages) averages_.emplace_back(kind);
}

void AverageTracker::evaluate(Step t) {
  last_eval_ = t;
  if (!config_.record.function_values && !config_.stop_at) return;
  EvalPoint p = evaluate_averages(objective_, averages_, t);
  if (config_.record.function_values) evaluations_.push_back(p);
  if (config_.stop_at) {
    const double best = *std::min_element(p.f.begin(), p.f.end()) - config_.stop_at->f_star;
    if (t == 0) initial_gap_ = std::max(best, 1.0);
    if (best <= config_.stop_at->epsilon) reached_ = true;
    if (!(best < 1e12 * initial_gap_)) diverged_ = true;
  }
}

bool AverageTracker::observe(Step t, std::span<const double> x_bar, bool eval_eligible) {
  if (!all_finite(x_bar)) {
    diverged_ = true;
    return true;
  }
  for (RunningAverage& avg : averages_) avg.update(x_bar, t);
  if (t < config_.steps) {
    output_.add(averaging_weight(AveragingKind::kQuadratic, t, output_shift_), x_bar);
  }
  const bool final_step = t == config_.steps;
  if (t == 0 || final_step || (eval_eligible && t - last_eval_ >= stride_)) evaluate(t);
  return reached_ || diverged_;
}

void AverageTracker::finish(RunTrace& trace) const {
  trace.evaluations = evaluations_;
  for (std::size_t s = 0; s < averages_.size(); ++s) trace.final_averages[s] = averages_[s].value();
  if (!output_.empty()) trace.output_average = output_.value();
  trace.output_shift = output_shift_;
  trace.reached_target = reached_;
  trace.diverged = diverged_;
}

}  // namespace detail

RunTrace run_local_sgd(const RunConfig& config, const Objective& objective) {
  config.validate(objective);
  const RecordOptions& rec = config.record;
  std::vector<WorkerState> states = initial_states(config, objective);
  detail::AverageTracker tracker(objective, config);
  RunTrace trace;

  const auto record_state = [&](Step t, const Vector& x_bar) {
    if (rec.virtual_iterates) trace.virtual_iterates.push_back(x_bar);
    if (rec.worker_iterates) {
      std::vector<Vector> xs;
      xs.reserve(states.size());
      for (const WorkerState& w : states) xs.push_back(w.x);
      trace.worker_iterates.push_back(std::move(xs));
    }
    if (rec.deviation) {
      double dev = 0.0;
      for (const WorkerState& w : states) dev += squared_distance(x_bar, w.x);
      trace.deviation.push_back(dev / static_cast<double>(states.size()));
    }
    return tracker.observe(t, x_bar, t == 0 || config.sync.contains(t));
  };

  Vector x_bar = virtual_average(states);
  bool stop = record_state(0, x_bar);
  const auto& sync_points = config.sync.indices();
  auto next_sync = sync_points.begin();
  Step t = 0;
  while (!stop && t < config.steps) {
    StepGradients grads = step_once(states, t, config, objective, rec.gradient_noise);
    if (rec.gradient_noise) trace.gradient_noise.push_back(squared_distance(grads.g, grads.g_bar));
    ++t;
    if (next_sync != sync_points.end() && *next_sync == t) {
      ++next_sync;
      ++trace.communication_rounds;
      const Vector avg = virtual_average(states);
      for (WorkerState& w : states) w.x = avg;
      x_bar = avg;
    } else {
      x_bar = virtual_average(states);
    }
    stop = record_state(t, x_bar);
  }
  trace.steps_completed = t;
  tracker.finish(trace);
  trace.final_workers.reserve(states.size());
  for (const WorkerState& w : states) trace.final_workers.push_back(w.x);
  return trace;
}

std::optional<Step> iterations_to_accuracy(const RunTrace& trace, double epsilon, double f_star) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("iterations_to_accuracy: epsilon must be > 0");
  for (const EvalPoint& p : trace.evaluations) {
    const double best = *std::min_element(p.f.begin(), p.f.end());
    if (best - f_star <= epsilon) return p.t;
  }
  return std::nullopt;
}

}  // namespace localsgd
