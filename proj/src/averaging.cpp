#include "localsgd/averaging.hpp"

#include <stdexcept>

namespace localsgd {

std::string to_string(AveragingKind kind) {
  switch (kind) {
    case AveragingKind::kLast:
      return "last";
    case AveragingKind::kUniform:
      return "uniform";
    case AveragingKind::kLinear:
      return "linear";
    case AveragingKind::kQuadratic:
      return "quadratic";
  }
  return "unknown";
}

double averaging_weight(AveragingKind kind, Step t, double shift) {
  const double td = static_cast<double>(t);
  switch (kind) {
    case AveragingKind::kLast:
    case AveragingKind::kUniform:
      return 1.0;
    case AveragingKind::kLinear:
      return td + 1.0;
    case AveragingKind::kQuadratic:
      return (shift + td) * (shift + td);
  }
  return 0.0;
}

WeightedAccumulator::WeightedAccumulator(std::size_t dimension)
    : weighted_sum_(dimension, 0.0) {}

void WeightedAccumulator::add(double weight, std::span<const double> x) {
  if (weighted_sum_.empty() && total_weight_ == 0.0) weighted_sum_.assign(x.size(), 0.0);
  axpy(weight, x, weighted_sum_);
  total_weight_ += weight;
}

Vector WeightedAccumulator::value() const {
  if (total_weight_ == 0.0) throw std::logic_error("weighted average of nothing");
  Vector y = weighted_sum_;
  scale(1.0 / total_weight_, y);
  return y;
}

RunningAverage::RunningAverage(AveragingKind kind, double shift)
    : kind_(kind),
      shift_(shift),
      use_accumulator_(kind == AveragingKind::kQuadratic && shift != 1.0) {
  if (kind == AveragingKind::kQuadratic && !(shift > 0.0)) {
    throw std::invalid_argument("quadratic averaging: shift must be > 0");
  }
}

void RunningAverage::update(std::span<const double> x, Step t) {
  if (t != count_) {
    throw std::invalid_argument("running average: out-of-order update (expected t=" +
                                std::to_string(count_) + ", got " + std::to_string(t) + ")");
  }
  ++count_;
  if (use_accumulator_) {
    accumulator_.add(averaging_weight(kind_, t, shift_), x);
    y_ = accumulator_.value();
    return;
  }
  if (t == 0 || kind_ == AveragingKind::kLast) {
    y_.assign(x.begin(), x.end());
    return;
  }
  check_same_size(x.size(), y_.size(), "running average");
  const double td = static_cast<double>(t);
  double cx = 0.0;
  double cy = 0.0;
  switch (kind_) {
    case AveragingKind::kUniform:
      cx = 1.0 / (td + 1.0);
      cy = td / (td + 1.0);
      break;
    case AveragingKind::kLinear:
      cx = 2.0 / (2.0 + td);
      cy = td / (td + 2.0);
      break;
    case AveragingKind::kQuadratic:
      cx = 6.0 * (td + 1.0) / ((td + 2.0) * (2.0 * td + 3.0));
      cy = td * (1.0 + 2.0 * td) / (6.0 + 7.0 * td + 2.0 * td * td);
      break;
    case AveragingKind::kLast:
      break;
  }
  for (std::size_t j = 0; j < y_.size(); ++j) y_[j] = cx * x[j] + cy * y_[j];
}

double sum_of_weights(double a, Step T) {
  if (T < 1) throw std::invalid_argument("sum_of_weights: T must be >= 1");
  if (!(a >= 1.0)) throw std::invalid_argument("sum_of_weights: a must be >= 1");
  const double t = static_cast<double>(T);
  return t / 6.0 * (2.0 * t * t + 6.0 * a * t - 3.0 * t + 6.0 * a * a - 6.0 * a + 1.0);
}

Vector theorem_average(const std::vector<std::vector<Vector>>& traces, double a) {
  if (traces.empty() || traces.front().empty()) {
    throw std::invalid_argument("theorem_average: empty traces");
  }
  const std::size_t T = traces.front().size();
  for (const auto& trace : traces) {
    if (trace.size() != T) throw std::invalid_argument("theorem_average: ragged traces");
  }
  WeightedAccumulator acc(traces.front().front().size());
  for (std::size_t t = 0; t < T; ++t) {
    const double w = averaging_weight(AveragingKind::kQuadratic, static_cast<Step>(t), a);
    for (const auto& trace : traces) acc.add(w, trace[t]);
  }
  return acc.value();
}

}  // namespace localsgd
