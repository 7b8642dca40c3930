#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "localsgd/linalg.hpp"
#include "localsgd/schedules.hpp"

namespace localsgd {

enum class AveragingKind { kLast, kUniform, kLinear, kQuadratic };

inline constexpr std::array<AveragingKind, 4> kTrackedAverages = {
    AveragingKind::kLast, AveragingKind::kUniform, AveragingKind::kLinear,
    AveragingKind::kQuadratic};

std::string to_string(AveragingKind kind);

// Weight of iterate t: last → n/a (1 on the newest), uniform → 1,
// linear → t + 1, quadratic → (shift + t)².
double averaging_weight(AveragingKind kind, Step t, double shift = 1.0);

// Σ_{t<T} w_t and Σ_{t<T} w_t x_t kept explicitly; works for any weights.
class WeightedAccumulator {
 public:
  explicit WeightedAccumulator(std::size_t dimension = 0);

  void add(double weight, std::span<const double> x);
  Vector value() const;
  double total_weight() const { return total_weight_; }
  bool empty() const { return total_weight_ == 0.0; }

 private:
  Vector weighted_sum_;
  double total_weight_ = 0.0;
};

// Running weighted average y_t of x_0..x_t, updated in order. Last, uniform,
// linear and quadratic with shift 1 use the closed-form recursions; quadratic
// with another shift falls back to a WeightedAccumulator.
class RunningAverage {
 public:
  explicit RunningAverage(AveragingKind kind, double shift = 1.0);

  // `t` must equal the number of updates applied so far.
  void update(std::span<const double> x, Step t);
  const Vector& value() const { return y_; }
  Step count() const { return count_; }
  AveragingKind kind() const { return kind_; }
  double shift() const { return shift_; }

 private:
  AveragingKind kind_;
  double shift_;
  bool use_accumulator_;
  Step count_ = 0;
  Vector y_;
  WeightedAccumulator accumulator_;
};

// S_T = Σ_{t=0}^{T−1} (a + t)² in closed form.
double sum_of_weights(double a, Step T);

// x̂_T = (1/(K S_T)) Σ_k Σ_{t<T} (a + t)² x_t^k; traces[k][t].
Vector theorem_average(const std::vector<std::vector<Vector>>& traces, double a);

}  // namespace localsgd
