#include "localsgd/lemmas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <type_traits>

#include "localsgd/averaging.hpp"
#include "localsgd/parallel.hpp"
#include "localsgd/rng.hpp"

namespace localsgd {

bool CheckReport::consistent() const {
  const bool within = statistic <= bound + kStderrMultiplier * stderr_;
  return pass == (within && !first_violation) && margin == bound - statistic;
}

std::ostream& operator<<(std::ostream& out, const CheckReport& r) {
  out << r.lemma << ": " << (r.pass ? "pass" : "FAIL") << " statistic=" << r.statistic
      << " bound=" << r.bound << " stderr=" << r.stderr_ << " trials=" << r.trials;
  if (r.worst_step) out << " worst_t=" << *r.worst_step;
  if (r.first_violation) out << " first_violation_t=" << *r.first_violation;
  if (!r.detail.empty()) out << " (" << r.detail << ")";
  return out;
}

void write_reports_csv(std::ostream& out, std::span<const CheckReport> reports) {
  out << "lemma,trials,statistic,bound,margin,stderr,pass,worst_step,first_violation,detail\n";
  out.precision(17);
  for (const CheckReport& r : reports) {
    std::string detail = r.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    out << r.lemma << ',' << r.trials << ',' << r.statistic << ',' << r.bound << ',' << r.margin
        << ',' << r.stderr_ << ',' << (r.pass ? 1 : 0) << ',';
    if (r.worst_step) out << *r.worst_step;
    out << ',';
    if (r.first_violation) out << *r.first_violation;
    out << ',' << detail << '\n';
  }
}

namespace {

struct Moments {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Mean and standard error of column t over rows, summed in row order.
Moments column_moments(const std::vector<std::vector<double>>& rows, std::size_t t) {
  const double n = static_cast<double>(rows.size());
  double sum = 0.0;
  for (const auto& r : rows) sum += r[t];
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& r : rows) ss += (r[t] - mean) * (r[t] - mean);
  const double var = rows.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

double excess_score(double statistic, double bound, double se) {
  const double scale = std::max(std::abs(bound) + kStderrMultiplier * se,
                                std::numeric_limits<double>::min());
  return (statistic - bound - kStderrMultiplier * se) / scale;
}

// Fills a per-step report from statistic / bound / stderr series.
CheckReport per_step_report(std::string lemma, std::size_t trials,
                            const std::vector<double>& statistic,
                            const std::vector<double>& bound, const std::vector<double>& se) {
  CheckReport report;
  report.lemma = std::move(lemma);
  report.trials = trials;
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t worst_t = 0;
  for (std::size_t t = 0; t < statistic.size(); ++t) {
    const double score = excess_score(statistic[t], bound[t], se[t]);
    if (score > 0.0 && !report.first_violation) report.first_violation = static_cast<Step>(t);
    if (score > worst) {
      worst = score;
      worst_t = t;
    }
  }
  report.worst_step = static_cast<Step>(worst_t);
  report.statistic = statistic[worst_t];
  report.bound = bound[worst_t];
  report.stderr_ = se[worst_t];
  report.margin = report.bound - report.statistic;
  report.pass = report.statistic <= report.bound + kStderrMultiplier * report.stderr_ &&
                !report.first_violation;
  if (report.first_violation) {
    const auto t = static_cast<std::size_t>(*report.first_violation);
    std::ostringstream msg;
    msg.precision(10);
    msg << "first violating step t=" << t << ": statistic=" << statistic[t]
        << " bound=" << bound[t] << " stderr=" << se[t];
    report.detail = msg.str();
    // A violation anywhere fails the report; show its numbers.
    report.worst_step = *report.first_violation;
    report.statistic = statistic[t];
    report.bound = bound[t];
    report.stderr_ = se[t];
    report.margin = report.bound - report.statistic;
    report.pass = false;
  }
  return report;
}

template <typename RunFn>
auto replicate_runs(const RunConfig& base, std::size_t first, std::size_t count, const RunFn& run) {
  std::vector<std::invoke_result_t<RunFn, const RunConfig&>> traces(count);
  parallel_for(count, [&](std::size_t r) {
    RunConfig cfg = base;
    cfg.seed = replicate_seed(base.seed, first + r);
    traces[r] = run(cfg);
  });
  return traces;
}

void require_theorem_decay(const RunConfig& config, double min_shift, const std::string& who,
                           const std::string& what) {
  if (config.stepsize.kind() != StepKind::kTheoremDecay) {
    throw std::invalid_argument(who + ": requires theorem-decay stepsizes 4/(mu(a+t))");
  }
  if (config.stepsize.shift() < min_shift) {
    throw std::invalid_argument(who + ": shift a=" + std::to_string(config.stepsize.shift()) +
                                " violates a >= " + what + " = " + std::to_string(min_shift));
  }
}

struct DelayedTrace {
  RunTrace trace;
  Step tau = 0;  // measured delay of the run
};

void require_runs(const MonteCarloPlan& plan, const std::string& who) {
  if (plan.runs < 2) throw std::invalid_argument(who + ": need at least 2 runs");
  if (plan.held_out < 1) throw std::invalid_argument(who + ": need at least 1 held-out run");
}

}  // namespace

TrajectoryMoments trajectory_moments(const Objective& objective,
                                     std::span<const RunTrace> traces) {
  EstimateOptions exact;
  exact.exact_limit = std::numeric_limits<std::size_t>::max();
  TrajectoryMoments out;
  for (const RunTrace& trace : traces) {
    if (trace.worker_iterates.empty()) {
      throw std::invalid_argument("trajectory_moments: traces must record worker iterates");
    }
    const std::size_t steps = trace.worker_iterates.size() - 1;
    for (std::size_t t = 0; t < std::max<std::size_t>(steps, 1); ++t) {
      const auto& xs = trace.worker_iterates[t];
      for (std::size_t k = 0; k < xs.size(); ++k) {
        if (k > 0 && xs[k] == xs[k - 1]) continue;
        const GradientMoments m = gradient_moments(objective, xs[k], exact);
        out.sigma2 = std::max(out.sigma2, m.variance);
        out.G2 = std::max(out.G2, m.second_moment);
        ++out.points;
      }
    }
  }
  return out;
}

double exact_variance_reduction(const Objective& objective, std::span<const Vector> states,
                                std::size_t batch) {
  if (states.empty()) throw std::invalid_argument("variance reduction: no worker states");
  if (batch < 1) throw std::invalid_argument("variance reduction: batch must be >= 1");
  EstimateOptions exact;
  exact.exact_limit = std::numeric_limits<std::size_t>::max();
  double sum = 0.0;
  for (const Vector& x : states) sum += gradient_moments(objective, x, exact).variance;
  const double K = static_cast<double>(states.size());
  return sum / (K * K * static_cast<double>(batch));
}

CheckReport check_variance_reduction(const Objective& objective, std::span<const Vector> states,
                                     std::size_t trials, std::uint64_t seed, std::size_t batch) {
  if (trials < 100) throw std::invalid_argument("variance reduction: trials must be >= 100");
  if (states.empty()) throw std::invalid_argument("variance reduction: no worker states");
  if (batch < 1) throw std::invalid_argument("variance reduction: batch must be >= 1");
  const std::size_t d = objective.dimension();
  const std::size_t n = objective.components();
  const double K = static_cast<double>(states.size());
  const double inv_b = 1.0 / static_cast<double>(batch);

  EstimateOptions exact;
  exact.exact_limit = std::numeric_limits<std::size_t>::max();
  double sigma2_max = 0.0;
  Vector g_bar(d, 0.0);
  for (const Vector& x : states) {
    sigma2_max = std::max(sigma2_max, gradient_moments(objective, x, exact).variance);
    axpy(1.0 / K, objective.gradient(x), g_bar);
  }

  Rng rng = substream(seed, kEstimateStreamTag);
  std::vector<std::vector<double>> samples(trials, std::vector<double>(1));
  Vector g(d);
  for (std::size_t r = 0; r < trials; ++r) {
    std::fill(g.begin(), g.end(), 0.0);
    for (const Vector& x : states) {
      for (std::size_t j = 0; j < batch; ++j) {
        objective.add_component_gradient(x, uniform_index(rng, n), inv_b / K, g);
      }
    }
    samples[r][0] = squared_distance(g, g_bar);
  }
  const Moments m = column_moments(samples, 0);
  CheckReport report = per_step_report("variance_reduction", trials, {m.mean},
                                       {sigma2_max * inv_b / K}, {m.stderr_});
  report.worst_step.reset();
  report.exact = exact_variance_reduction(objective, states, batch);
  return report;
}

CheckReport check_deviation_bound(const RunConfig& config, const Objective& objective,
                                  const ProblemConstants& constants, const MonteCarloPlan& plan) {
  const std::string who = "deviation bound";
  require_runs(plan, who);
  constants.validate();
  const Step H = config.sync.max_gap();
  require_theorem_decay(config, static_cast<double>(H), who, "H");
  config.validate(objective);

  const auto run = [&](const RunConfig& cfg) { return run_local_sgd(cfg, objective); };
  RunConfig tested = config;
  tested.record = RecordOptions{};
  tested.record.deviation = true;
  tested.record.function_values = false;
  tested.stop_at.reset();
  RunConfig held = tested;
  held.record.deviation = false;
  held.record.worker_iterates = true;

  const std::vector<RunTrace> held_out = replicate_runs(held, plan.runs, plan.held_out, run);
  const TrajectoryMoments moments = trajectory_moments(objective, held_out);
  const std::vector<RunTrace> traces = replicate_runs(tested, 0, plan.runs, run);

  std::vector<std::vector<double>> rows;
  rows.reserve(traces.size());
  for (const RunTrace& t : traces) rows.push_back(t.deviation);
  const std::size_t steps = static_cast<std::size_t>(config.steps) + 1;
  std::vector<double> stat(steps), bound(steps), se(steps);
  const double h = static_cast<double>(H);
  for (std::size_t t = 0; t < steps; ++t) {
    const Moments m = column_moments(rows, t);
    const double eta = config.stepsize.at(static_cast<Step>(t));
    stat[t] = m.mean;
    se[t] = m.stderr_;
    bound[t] = 4.0 * eta * eta * moments.G2 * h * h;
  }
  CheckReport report = per_step_report("deviation", plan.runs, stat, bound, se);
  if (report.detail.empty()) report.detail = "G2=" + std::to_string(moments.G2);
  return report;
}

CheckReport check_perturbed_inequality(const RunConfig& config, const Objective& objective,
                                       const ProblemConstants& constants,
                                       const ReferenceSolution& solution,
                                       const MonteCarloPlan& plan) {
  const std::string who = "perturbed inequality";
  if (plan.runs < 2) throw std::invalid_argument(who + ": need at least 2 runs");
  constants.validate();
  config.validate(objective);
  for (Step t = 0; t < config.steps; ++t) {
    if (config.stepsize.at(t) > 1.0 / (4.0 * constants.L)) {
      throw std::invalid_argument(who + ": stepsize eta_" + std::to_string(t) + "=" +
                                  std::to_string(config.stepsize.at(t)) + " exceeds 1/(4L)=" +
                                  std::to_string(1.0 / (4.0 * constants.L)));
    }
  }
  check_same_size(solution.x_star.size(), objective.dimension(), "perturbed inequality x*");

  RunConfig tested = config;
  tested.record = RecordOptions{};
  tested.record.virtual_iterates = true;
  tested.record.deviation = true;
  tested.record.gradient_noise = true;
  tested.record.function_values = false;
  tested.stop_at.reset();

  const std::size_t T = static_cast<std::size_t>(config.steps);
  std::vector<std::vector<double>> lhs(plan.runs), rhs(plan.runs), diff(plan.runs);
  parallel_for(plan.runs, [&](std::size_t r) {
    RunConfig cfg = tested;
    cfg.seed = replicate_seed(config.seed, r);
    const RunTrace trace = run_local_sgd(cfg, objective);
    lhs[r].resize(T);
    rhs[r].resize(T);
    diff[r].resize(T);
    double dist_t = squared_distance(trace.virtual_iterates[0], solution.x_star);
    for (std::size_t t = 0; t < T; ++t) {
      const double eta = config.stepsize.at(static_cast<Step>(t));
      const double dist_next = squared_distance(trace.virtual_iterates[t + 1], solution.x_star);
      const double gap = objective.value(trace.virtual_iterates[t]) - solution.f_star;
      const double right = (1.0 - constants.mu * eta) * dist_t +
                           eta * eta * trace.gradient_noise[t] - 0.5 * eta * gap +
                           2.0 * eta * constants.L * trace.deviation[t];
      lhs[r][t] = dist_next;
      rhs[r][t] = right;
      diff[r][t] = dist_next - right;
      dist_t = dist_next;
    }
  });

  std::vector<double> stat(T), bound(T), se(T);
  for (std::size_t t = 0; t < T; ++t) {
    stat[t] = column_moments(lhs, t).mean;
    bound[t] = column_moments(rhs, t).mean;
    se[t] = column_moments(diff, t).stderr_;
  }
  return per_step_report("perturbed_iterate", plan.runs, stat, bound, se);
}

double RecursionParams::drift(Step t, double a_t) const {
  const double h = eta(t);
  return (1.0 - mu * h) * a_t + h * h * B + h * h * h * C;
}

RecursionBuilder equality_recursion(double a0, double theta) {
  return slack_recursion(a0, theta, 0.0, 0);
}

RecursionBuilder slack_recursion(double a0, double theta, double slack, std::uint64_t seed) {
  if (a0 < 0.0) throw std::invalid_argument("recursion builder: a0 must be >= 0");
  if (theta < 0.0 || theta > 1.0) throw std::invalid_argument("recursion builder: theta in [0,1]");
  if (slack < 0.0 || slack > 1.0) throw std::invalid_argument("recursion builder: slack in [0,1]");
  return [=](const RecursionParams& p) {
    RecursionSequences s;
    s.a.reserve(static_cast<std::size_t>(p.T) + 1);
    s.a.push_back(a0);
    Rng rng = substream(seed, kEstimateStreamTag);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Step t = 0; t < p.T; ++t) {
      const double drift = p.drift(t, s.a.back());
      const double eta = p.eta(t);
      const double e = theta * std::max(drift, 0.0) / (eta * p.A);
      double next = drift - eta * p.A * e;
      if (slack > 0.0 && next > 0.0) next -= unit(rng) * slack * next;
      s.e.push_back(e);
      s.a.push_back(next);
    }
    return s;
  };
}

CheckReport check_recursion_lemma(const RecursionParams& p, const RecursionBuilder& builder) {
  if (!(p.A > 0.0) || p.B < 0.0 || p.C < 0.0 || !(p.mu > 0.0) || !(p.shift > 1.0) || p.T < 1) {
    throw std::invalid_argument(
        "recursion lemma: need A > 0, B >= 0, C >= 0, mu > 0, a > 1, T >= 1");
  }
  const RecursionSequences s = builder(p);
  const auto T = static_cast<std::size_t>(p.T);
  if (s.a.size() != T + 1 || s.e.size() != T) {
    throw std::invalid_argument("recursion lemma: builder must return T+1 values a_t and T values e_t");
  }
  CheckReport report;
  report.lemma = "recursion";
  report.trials = 1;
  for (std::size_t t = 0; t < T && !report.first_violation; ++t) {
    const double rhs = p.drift(static_cast<Step>(t), s.a[t]) - p.eta(static_cast<Step>(t)) * p.A * s.e[t];
    const double tol = 1e-12 * std::max({1.0, std::abs(rhs), s.a[t]});
    std::ostringstream msg;
    msg.precision(17);
    if (s.a[t] < 0.0 || s.e[t] < 0.0 || s.a[t + 1] < 0.0) {
      msg << "negative sequence value at t=" << t;
    } else if (s.a[t + 1] > rhs + tol) {
      msg << "recursion violated at t=" << t << ": a_{t+1}=" << s.a[t + 1] << " > " << rhs;
    } else {
      continue;
    }
    report.first_violation = static_cast<Step>(t);
    report.detail = msg.str();
  }

  const double S = sum_of_weights(p.shift, p.T);
  double weighted = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    weighted += averaging_weight(AveragingKind::kQuadratic, static_cast<Step>(t), p.shift) * s.e[t];
  }
  const double a = p.shift;
  const double t = static_cast<double>(p.T);
  report.statistic = p.A * weighted / S;
  report.bound = p.mu * a * a * a * s.a[0] / (4.0 * S) + 2.0 * t * (t + 2.0 * a) * p.B / (p.mu * S) +
                 16.0 * t * p.C / (p.mu * p.mu * S);
  report.margin = report.bound - report.statistic;
  report.stderr_ = 0.0;
  report.pass = report.statistic <= report.bound && !report.first_violation;
  return report;
}

CheckReport check_async_deviation(const RunConfig& config, std::span<const SyncSchedule> schedules,
                                  const DelayModel& delay, const Objective& objective,
                                  const ProblemConstants& constants, const MonteCarloPlan& plan,
                                  const ExecutionModel& execution) {
  const std::string who = "async deviation";
  require_runs(plan, who);
  constants.validate();
  if (config.stepsize.kind() != StepKind::kTheoremDecay) {
    throw std::invalid_argument(who + ": requires theorem-decay stepsizes 4/(mu(a+t))");
  }
  Step H = 0;
  for (const SyncSchedule& s : schedules) H = std::max(H, s.max_gap());

  const auto run = [&](const RunConfig& cfg) {
    DelayModel d = delay;
    d.seed = replicate_seed(delay.seed, cfg.seed);
    AsyncRun result = run_async_local_sgd(cfg, schedules, d, objective, execution);
    if (!result.log.complete()) throw std::runtime_error(who + ": incomplete write log");
    return DelayedTrace{std::move(result.trace), measured_delay(result.log)};
  };
  RunConfig tested = config;
  tested.record = RecordOptions{};
  tested.record.deviation = true;
  tested.record.function_values = false;
  tested.stop_at.reset();
  RunConfig held = tested;
  held.record.deviation = false;
  held.record.worker_iterates = true;

  const std::vector<DelayedTrace> held_out = replicate_runs(held, plan.runs, plan.held_out, run);
  std::vector<RunTrace> held_traces;
  for (const DelayedTrace& h : held_out) held_traces.push_back(h.trace);
  const TrajectoryMoments moments = trajectory_moments(objective, held_traces);
  const std::vector<DelayedTrace> traces = replicate_runs(tested, 0, plan.runs, run);

  Step tau = 0;
  for (const DelayedTrace& t : held_out) tau = std::max(tau, t.tau);
  for (const DelayedTrace& t : traces) tau = std::max(tau, t.tau);
  require_theorem_decay(config, static_cast<double>(H + tau), who, "H + tau");

  std::vector<std::vector<double>> rows;
  rows.reserve(traces.size());
  for (const DelayedTrace& t : traces) rows.push_back(t.trace.deviation);
  const std::size_t steps = static_cast<std::size_t>(config.steps) + 1;
  std::vector<double> stat(steps), bound(steps), se(steps);
  const double ht = static_cast<double>(H + tau);
  for (std::size_t t = 0; t < steps; ++t) {
    const Moments m = column_moments(rows, t);
    const double eta = config.stepsize.at(static_cast<Step>(t));
    stat[t] = m.mean;
    se[t] = m.stderr_;
    bound[t] = 12.0 * eta * eta * moments.G2 * ht * ht;
  }
  CheckReport report = per_step_report("async_deviation", plan.runs, stat, bound, se);
  if (report.detail.empty()) {
    report.detail = "tau=" + std::to_string(tau) + " G2=" + std::to_string(moments.G2);
  }
  return report;
}

}  // namespace localsgd
