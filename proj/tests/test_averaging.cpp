#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "localsgd/averaging.hpp"
#include "support.hpp"

using namespace localsgd;

namespace {

// Σ w_i x_i / Σ w_i by direct summation.
Vector direct_average(const std::vector<Vector>& xs, AveragingKind kind, double shift = 1.0) {
  if (kind == AveragingKind::kLast) return xs.back();
  Vector sum(xs[0].size(), 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const double w = averaging_weight(kind, static_cast<Step>(t), shift);
    axpy(w, xs[t], sum);
    total += w;
  }
  scale(1.0 / total, sum);
  return sum;
}

}  // namespace

TEST_CASE("single point and two-point examples") {
  for (AveragingKind kind : kTrackedAverages) {
    RunningAverage avg(kind);
    avg.update(Vector{3.0, -1.0}, 0);
    CHECK(avg.value() == Vector{3.0, -1.0});
  }
  RunningAverage quad(AveragingKind::kQuadratic);
  quad.update(Vector{1.0}, 0);
  quad.update(Vector{6.0}, 1);
  CHECK(quad.value()[0] == doctest::Approx(0.2 * 1.0 + 0.8 * 6.0));
  RunningAverage uni(AveragingKind::kUniform);
  uni.update(Vector{1.0}, 0);
  uni.update(Vector{6.0}, 1);
  CHECK(uni.value()[0] == doctest::Approx(3.5));
}

TEST_CASE("recursions match direct weighted sums on random streams") {
  const std::size_t length = 1000;
  std::vector<Vector> xs;
  for (std::size_t t = 0; t < length; ++t) xs.push_back(fixtures::random_point(5, 100 + t, 3.0));
  for (AveragingKind kind : kTrackedAverages) {
    RunningAverage avg(kind);
    for (std::size_t t = 0; t < length; ++t) {
      avg.update(xs[t], static_cast<Step>(t));
      if (t % 97 == 0 || t + 1 == length) {
        const std::vector<Vector> prefix(xs.begin(), xs.begin() + static_cast<long>(t) + 1);
        const Vector ref = direct_average(prefix, kind);
        const double rel = std::sqrt(squared_distance(avg.value(), ref) /
                                     std::max(squared_norm(ref), 1e-300));
        CHECK(rel <= 1e-9);
      }
    }
  }
  RunningAverage shifted(AveragingKind::kQuadratic, 17.0);
  for (std::size_t t = 0; t < length; ++t) shifted.update(xs[t], static_cast<Step>(t));
  const Vector ref = direct_average(xs, AveragingKind::kQuadratic, 17.0);
  CHECK(std::sqrt(squared_distance(shifted.value(), ref) / squared_norm(ref)) <= 1e-9);
}

TEST_CASE("out-of-order updates are rejected") {
  RunningAverage avg(AveragingKind::kLinear);
  avg.update(Vector{1.0}, 0);
  CHECK_THROWS(avg.update(Vector{1.0}, 2));
}

TEST_CASE("S_T closed form") {
  CHECK(sum_of_weights(1.0, 1) == 1.0);
  CHECK(sum_of_weights(1.0, 3) == 14.0);
  for (double a : {1.0, 2.0, 16.0, 64.5, 1000.0}) {
    for (Step T : {1, 2, 10, 1000, 10000}) {
      double direct = 0.0;
      for (Step t = 0; t < T; ++t) direct += (a + static_cast<double>(t)) * (a + static_cast<double>(t));
      CHECK(std::abs(sum_of_weights(a, T) - direct) <= 1e-12 * direct);
      CHECK(sum_of_weights(a, T) >= std::pow(static_cast<double>(T), 3) / 3.0);
    }
  }
  CHECK_THROWS(sum_of_weights(1.0, 0));
}

TEST_CASE("theorem average") {
  const std::vector<std::vector<Vector>> one{{Vector{2.0, 5.0}}};
  CHECK(theorem_average(one, 16.0) == Vector{2.0, 5.0});
  const Vector v{1.5, -2.5};
  const std::vector<std::vector<Vector>> same(3, std::vector<Vector>(7, v));
  const Vector avg = theorem_average(same, 4.0);
  CHECK(fixtures::max_abs_diff(avg, v) <= 1e-15);

  // Two workers, two steps, by hand: weights (a)², (a+1)².
  const double a = 2.0;
  const std::vector<std::vector<Vector>> traces{{Vector{0.0}, Vector{1.0}},
                                                {Vector{2.0}, Vector{3.0}}};
  const double expected = (4.0 * (0.0 + 2.0) + 9.0 * (1.0 + 3.0)) / (2.0 * 13.0);
  CHECK(theorem_average(traces, a)[0] == doctest::Approx(expected));
  const std::vector<std::vector<Vector>> ragged{{Vector{0.0}}, {Vector{0.0}, Vector{1.0}}};
  CHECK_THROWS(theorem_average(ragged, a));
}

TEST_CASE("weighted accumulator") {
  WeightedAccumulator acc(2);
  CHECK(acc.empty());
  acc.add(1.0, Vector{1.0, 0.0});
  acc.add(3.0, Vector{5.0, 4.0});
  CHECK(acc.total_weight() == 4.0);
  CHECK(acc.value() == Vector{4.0, 3.0});
}
