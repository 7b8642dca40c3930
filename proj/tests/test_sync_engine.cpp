#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "localsgd/sync_engine.hpp"
#include "support.hpp"

using namespace localsgd;

namespace {

// Plain SGD with mini-batches of K·b indices: the first b come from worker
// stream 0, the next b from stream 1, and so on. Returns x_0..x_T.
std::vector<Vector> minibatch_sgd(const Objective& f, std::size_t K, std::size_t b, Step T,
                                  const StepSchedule& eta, std::uint64_t seed) {
  std::vector<Rng> streams;
  for (std::size_t k = 0; k < K; ++k) streams.push_back(worker_stream(seed, k));
  Vector x(f.dimension(), 0.0);
  std::vector<Vector> out{x};
  for (Step t = 0; t < T; ++t) {
    Vector g(f.dimension(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < b; ++j) {
        f.add_component_gradient(x, uniform_index(streams[k], f.components()),
                                 1.0 / static_cast<double>(K * b), g);
      }
    }
    axpy(-eta.at(t), g, x);
    out.push_back(x);
  }
  return out;
}

RunConfig basic_config(std::size_t K, Step T, Step H, std::size_t b, StepSchedule eta,
                       std::uint64_t seed = 42) {
  return RunConfig(K, T, b, regular_sync_schedule(T, H), eta, seed);
}

}  // namespace

TEST_CASE("K=1 equals serial SGD on the same stream") {
  const auto f = fixtures::logistic50();
  const StepSchedule eta = StepSchedule::constant(0.05);
  RunConfig cfg = basic_config(1, 200, 7, 1, eta);
  cfg.record.virtual_iterates = true;
  const RunTrace trace = run_local_sgd(cfg, *f);
  const auto serial = minibatch_sgd(*f, 1, 1, 200, eta, 42);
  REQUIRE(trace.virtual_iterates.size() == serial.size());
  for (std::size_t t = 0; t < serial.size(); ++t) CHECK(trace.virtual_iterates[t] == serial[t]);
}

TEST_CASE("H=1 equals mini-batch SGD with batch K*b") {
  const auto f = fixtures::logistic50();
  const StepSchedule eta = StepSchedule::experiment_decay(0.02, 50.0);
  for (auto [K, b] : {std::pair<std::size_t, std::size_t>{2, 1}, {4, 1}, {4, 4}}) {
    RunConfig cfg = basic_config(K, 300, 1, b, eta, 9);
    cfg.record.worker_iterates = true;
    const RunTrace trace = run_local_sgd(cfg, *f);
    const auto ref = minibatch_sgd(*f, K, b, 300, eta, 9);
    double worst = 0.0;
    for (std::size_t t = 0; t < ref.size(); ++t) {
      for (const Vector& x : trace.worker_iterates[t]) worst = std::max(worst, fixtures::max_abs_diff(x, ref[t]));
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("hand-computed d=1 example") {
  const QuadraticObjective f(Vector{1.0}, std::vector<Vector>{Vector{0.0}});
  RunConfig cfg(2, 1, 1, SyncSchedule(1, {1}), StepSchedule::constant(1.0 / 32.0), 3);
  cfg.x0 = Vector{2.0};
  cfg.record.worker_iterates = true;
  const RunTrace trace = run_local_sgd(cfg, f);
  CHECK(trace.worker_iterates[1][0][0] == 0.0);
  CHECK(trace.worker_iterates[1][1][0] == 0.0);
  CHECK(trace.communication_rounds == 1);
}

TEST_CASE("synchronization, deviation and round invariants") {
  const auto q = fixtures::quadratic10(1.0);
  const SyncSchedule sync(60, {5, 6, 17, 30, 44, 60});
  RunConfig cfg(4, 60, 2, sync, StepSchedule::constant(0.002), 5);
  cfg.record.worker_iterates = true;
  cfg.record.deviation = true;
  cfg.record.virtual_iterates = true;
  const RunTrace trace = run_local_sgd(cfg, *q.objective);
  CHECK(trace.communication_rounds == static_cast<Step>(sync.rounds()));
  CHECK(trace.deviation[0] == 0.0);
  for (Step t = 1; t <= 60; ++t) {
    const auto& xs = trace.worker_iterates[static_cast<std::size_t>(t)];
    if (sync.contains(t)) {
      CHECK(trace.deviation[static_cast<std::size_t>(t)] == 0.0);
      for (const Vector& x : xs) CHECK(fixtures::max_abs_diff(x, xs[0]) <= 1e-12);
      CHECK(trace.virtual_iterates[static_cast<std::size_t>(t)] == xs[0]);
    } else {
      CHECK(trace.deviation[static_cast<std::size_t>(t)] > 0.0);
    }
  }
}

TEST_CASE("virtual sequence identity through step_once and averaging") {
  const auto f = fixtures::logistic50();
  RunConfig cfg = basic_config(3, 40, 4, 2, StepSchedule::constant(0.02), 8);
  std::vector<WorkerState> states = initial_states(cfg, *f);
  Vector x_bar = virtual_average(states);
  for (Step t = 0; t < 40; ++t) {
    const StepGradients g = step_once(states, t, cfg, *f, true);
    Vector expected = x_bar;
    axpy(-cfg.stepsize.at(t), g.g, expected);
    if (cfg.sync.contains(t + 1)) {
      const Vector avg = virtual_average(states);
      for (WorkerState& w : states) w.x = avg;
    }
    x_bar = virtual_average(states);
    CHECK(fixtures::max_abs_diff(x_bar, expected) <= 1e-12);
  }
}

TEST_CASE("step_once gradients") {
  const auto clean = fixtures::quadratic10(0.0);
  RunConfig cfg = basic_config(3, 10, 1, 1, StepSchedule::constant(0.001), 1);
  std::vector<WorkerState> same = initial_states(cfg, *clean.objective);
  for (WorkerState& w : same) w.x = fixtures::random_point(10, 77);
  const StepGradients g = step_once(same, 0, cfg, *clean.objective, true);
  CHECK(fixtures::max_abs_diff(g.g, g.g_bar) <= 1e-12);

  // Monte-Carlo mean of g_t at fixed states approaches ḡ_t.
  const auto f = fixtures::logistic50();
  std::vector<Vector> points{fixtures::random_point(20, 1, 0.3), fixtures::random_point(20, 2, 0.3)};
  const std::size_t trials = 10000;
  std::vector<Vector> samples;
  Vector g_bar;
  for (std::size_t r = 0; r < trials; ++r) {
    RunConfig c = basic_config(2, 1, 1, 1, StepSchedule::constant(0.001), r);
    std::vector<WorkerState> states = initial_states(c, *f);
    for (std::size_t k = 0; k < 2; ++k) states[k].x = points[k];
    StepGradients s = step_once(states, 0, c, *f, r == 0);
    if (r == 0) g_bar = s.g_bar;
    samples.push_back(s.g);
  }
  for (std::size_t j = 0; j < 20; ++j) {
    double mean = 0.0, sq = 0.0;
    for (const Vector& s : samples) mean += s[j];
    mean /= trials;
    for (const Vector& s : samples) sq += (s[j] - mean) * (s[j] - mean);
    const double se = std::sqrt(sq / (trials - 1) / trials);
    CHECK(std::abs(mean - g_bar[j]) <= 3.0 * se + 1e-15);
  }
}

TEST_CASE("virtual average") {
  std::vector<WorkerState> s(2);
  s[0].x = Vector{1.0};
  s[1].x = Vector{3.0};
  CHECK(virtual_average(s) == Vector{2.0});
  const Vector v{0.1, 0.7, 1e-3};
  std::vector<WorkerState> same(5);
  for (WorkerState& w : same) w.x = v;
  CHECK(virtual_average(same) == v);
  CHECK_THROWS(virtual_average(std::vector<WorkerState>{}));
}

TEST_CASE("iterations to accuracy") {
  RunTrace trace;
  for (Step t = 0; t <= 10; ++t) {
    EvalPoint p;
    p.t = t;
    p.f = {10.0 - t, 11.0 - t, 12.0 - t, 10.5 - t};
    trace.evaluations.push_back(p);
  }
  CHECK(iterations_to_accuracy(trace, 4.5, 0.0) == Step{6});
  CHECK(iterations_to_accuracy(trace, 100.0, 0.0) == Step{0});
  CHECK(!iterations_to_accuracy(trace, 0.5, -1.0).has_value());
  CHECK_THROWS(iterations_to_accuracy(trace, 0.0, 0.0));

  const auto q = fixtures::quadratic10(1.0);
  RunConfig cfg = basic_config(2, 400, 4, 1, StepSchedule::constant(0.003), 12);
  cfg.record.eval_stride = 4;
  const RunTrace run = run_local_sgd(cfg, *q.objective);
  const double eps = 0.05;
  std::optional<Step> brute;
  for (const EvalPoint& p : run.evaluations) {
    for (double v : p.f) {
      if (!brute && v - q.solution.f_star <= eps) brute = p.t;
    }
  }
  REQUIRE(brute.has_value());
  CHECK(iterations_to_accuracy(run, eps, q.solution.f_star) == brute);

  // Early stop at the first evaluation that reaches ε.
  cfg.stop_at = AccuracyTarget{q.solution.f_star, eps};
  const RunTrace stopped = run_local_sgd(cfg, *q.objective);
  CHECK(stopped.reached_target);
  CHECK(stopped.steps_completed == *brute);
}

TEST_CASE("determinism and validation") {
  const auto f = fixtures::logistic50();
  RunConfig cfg = basic_config(3, 50, 5, 2, StepSchedule::constant(0.05), 4);
  cfg.record.worker_iterates = true;
  const RunTrace a = run_local_sgd(cfg, *f);
  const RunTrace b = run_local_sgd(cfg, *f);
  CHECK(a.worker_iterates == b.worker_iterates);
  CHECK(a.output_average == b.output_average);

  RunConfig bad = basic_config(2, 50, 5, 1, StepSchedule::theorem_decay(1.0, 10.0));
  bad.constants = ProblemConstants{4.0, 1.0, 1.0, 1.0};
  CHECK_THROWS_AS(run_local_sgd(bad, *fixtures::quadratic10().objective), std::invalid_argument);
  RunConfig mismatch(2, 40, 1, regular_sync_schedule(50, 5), StepSchedule::constant(0.1), 1);
  CHECK_THROWS_AS(run_local_sgd(mismatch, *f), std::invalid_argument);
  RunConfig wrong_x0 = basic_config(2, 10, 5, 1, StepSchedule::constant(0.1));
  wrong_x0.x0 = Vector(3, 0.0);
  CHECK_THROWS_AS(run_local_sgd(wrong_x0, *f), std::invalid_argument);
}

TEST_CASE("output average uses the quadratic weights over x_t^k") {
  const auto q = fixtures::quadratic10(1.0);
  const double a = 64.0;
  RunConfig cfg = basic_config(3, 30, 4, 1, StepSchedule::theorem_decay(1.0, a), 6);
  cfg.record.worker_iterates = true;
  const RunTrace trace = run_local_sgd(cfg, *q.objective);
  std::vector<std::vector<Vector>> per_worker(3);
  for (std::size_t t = 0; t < 30; ++t) {
    for (std::size_t k = 0; k < 3; ++k) per_worker[k].push_back(trace.worker_iterates[t][k]);
  }
  CHECK(fixtures::max_abs_diff(trace.output_average, theorem_average(per_worker, a)) <= 1e-12);
}
