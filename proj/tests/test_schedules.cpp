#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "localsgd/schedules.hpp"

using namespace localsgd;

TEST_CASE("gap of index sets") {
  std::vector<Step> every(11);
  for (Step t = 0; t <= 10; ++t) every[static_cast<std::size_t>(t)] = t;
  CHECK(gap(every) == 1);
  CHECK(gap(std::vector<Step>{0, 3, 5, 9}) == 4);
  CHECK(gap(std::vector<Step>{0, 37}) == 37);
  CHECK_THROWS(gap(std::vector<Step>{4}));
}

TEST_CASE("gap matches a brute-force scan on random sets") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Step T = 1 + static_cast<Step>(rng() % 60);
    std::vector<Step> idx;
    for (Step t = 1; t < T; ++t) {
      if (rng() % 3 == 0) idx.push_back(t);
    }
    idx.push_back(T);
    const SyncSchedule s(T, idx);
    Step brute = 0;
    for (Step a = 0; a <= T; ++a) {
      if (a != 0 && !s.contains(a)) continue;
      Step b = a + 1;
      while (b <= T && !s.contains(b)) ++b;
      if (b <= T) brute = std::max(brute, b - a);
    }
    CHECK(s.max_gap() == brute);
  }
}

TEST_CASE("regular schedules") {
  CHECK(regular_sync_schedule(10, 3).indices() == std::vector<Step>{3, 6, 9, 10});
  CHECK(regular_sync_schedule(10, 1).indices() ==
        std::vector<Step>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(regular_sync_schedule(10, 10).indices() == std::vector<Step>{10});
  CHECK(regular_sync_schedule(10, 10).max_gap() == 10);
  CHECK(regular_sync_schedule(10, 3).max_gap() == 3);
  CHECK(regular_sync_schedule(10, 3).rounds() == 4);
  CHECK(regular_sync_schedule(10, 3).rounds_through(7) == 2);
  CHECK(regular_sync_schedule(5, 8).indices() == std::vector<Step>{5});
  CHECK(offset_sync_schedule(10, 4, 2).indices() == std::vector<Step>{2, 6, 10});
  CHECK(offset_sync_schedule(10, 4, 2).max_gap() == 4);
}

TEST_CASE("invalid schedules") {
  CHECK_THROWS_AS(SyncSchedule(10, {3, 6}), std::invalid_argument);
  CHECK_THROWS_AS(SyncSchedule(10, {0, 10}), std::invalid_argument);
  CHECK_THROWS_AS(SyncSchedule(10, {5, 11}), std::invalid_argument);
  CHECK_THROWS(regular_sync_schedule(0, 1));
  CHECK_THROWS(regular_sync_schedule(10, 0));
  const SyncSchedule dup(6, {6, 2, 2, 4});
  CHECK(dup.indices() == std::vector<Step>{2, 4, 6});
}

TEST_CASE("stepsize families") {
  CHECK(StepSchedule::theorem_decay(1.0, 32.0).at(0) == 0.125);
  CHECK(StepSchedule::theorem_decay(2.0, 16.0).at(4) == doctest::Approx(4.0 / (2.0 * 20.0)));
  CHECK(StepSchedule::constant(0.25).at(0) == 8.0);
  CHECK(StepSchedule::constant(0.25).at(1000) == 8.0);
  const StepSchedule decay = StepSchedule::experiment_decay(1.0, 100.0);
  CHECK(decay.at(199) == 0.5);
  CHECK(decay.at(0) == kStepCap);
  CHECK(decay.at(3) == 25.0);
  CHECK(StepSchedule::theorem_decay(1.0, 32.0).kind() == StepKind::kTheoremDecay);
  CHECK(stepsize(0, StepSchedule::constant(1.0)) == 32.0);
  CHECK_THROWS(StepSchedule::theorem_decay(0.0, 10.0));
  CHECK_THROWS(StepSchedule::constant(-1.0));
}
