#include "localsgd/schedules.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace localsgd {

Step gap(std::span<const Step> sorted_indices) {
  if (sorted_indices.size() < 2) {
    throw std::invalid_argument("gap: need at least two indices");
  }
  Step g = 0;
  for (std::size_t i = 1; i < sorted_indices.size(); ++i) {
    if (sorted_indices[i] < sorted_indices[i - 1]) {
      throw std::invalid_argument("gap: indices must be sorted ascending");
    }
    g = std::max(g, sorted_indices[i] - sorted_indices[i - 1]);
  }
  return g;
}

SyncSchedule::SyncSchedule(Step horizon, std::vector<Step> indices)
    : horizon_(horizon), indices_(std::move(indices)), max_gap_(0) {
  if (horizon_ < 1) throw std::invalid_argument("sync schedule: horizon must be >= 1");
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  if (indices_.empty() || indices_.back() != horizon_) {
    throw std::invalid_argument("sync schedule: horizon T must be a synchronization index");
  }
  if (indices_.front() < 1) {
    throw std::invalid_argument("sync schedule: indices must lie in [1, T]");
  }
  std::vector<Step> with_origin;
  with_origin.reserve(indices_.size() + 1);
  with_origin.push_back(0);
  with_origin.insert(with_origin.end(), indices_.begin(), indices_.end());
  max_gap_ = gap(with_origin);
}

bool SyncSchedule::contains(Step t) const {
  return std::binary_search(indices_.begin(), indices_.end(), t);
}

Step SyncSchedule::rounds_through(Step t) const {
  return std::upper_bound(indices_.begin(), indices_.end(), t) - indices_.begin();
}

SyncSchedule regular_sync_schedule(Step T, Step H) {
  return offset_sync_schedule(T, H, H);
}

SyncSchedule offset_sync_schedule(Step T, Step H, Step offset) {
  if (H < 1 || T < 1) throw std::invalid_argument("sync schedule: need H >= 1 and T >= 1");
  if (offset < 1 || offset > H) throw std::invalid_argument("sync schedule: need 1 <= offset <= H");
  std::vector<Step> idx;
  idx.reserve(static_cast<std::size_t>(T / H) + 2);
  for (Step t = offset; t < T; t += H) idx.push_back(t);
  idx.push_back(T);
  return SyncSchedule(T, std::move(idx));
}

StepSchedule::StepSchedule(StepKind kind, double mu, double shift, double c, double n)
    : kind_(kind), mu_(mu), shift_(shift), c_(c), n_(n) {}

StepSchedule StepSchedule::theorem_decay(double mu, double shift) {
  if (!(mu > 0.0)) throw std::invalid_argument("theorem-decay stepsize: mu must be > 0");
  if (!(shift > 0.0)) throw std::invalid_argument("theorem-decay stepsize: shift a must be > 0");
  return StepSchedule(StepKind::kTheoremDecay, mu, shift, 0.0, 0.0);
}

StepSchedule StepSchedule::constant(double c) {
  if (!(c > 0.0)) throw std::invalid_argument("constant stepsize: c must be > 0");
  return StepSchedule(StepKind::kConstant, 0.0, 0.0, c, 0.0);
}

StepSchedule StepSchedule::experiment_decay(double c, double n) {
  if (!(c > 0.0)) throw std::invalid_argument("decaying stepsize: c must be > 0");
  if (!(n > 0.0)) throw std::invalid_argument("decaying stepsize: n must be > 0");
  return StepSchedule(StepKind::kExperimentDecay, 0.0, 0.0, c, n);
}

double StepSchedule::at(Step t) const {
  if (t < 0) throw std::invalid_argument("stepsize: t must be >= 0");
  const double td = static_cast<double>(t);
  switch (kind_) {
    case StepKind::kTheoremDecay:
      return 4.0 / (mu_ * (shift_ + td));
    case StepKind::kConstant:
      return kStepCap * c_;
    case StepKind::kExperimentDecay:
      return std::min(kStepCap, c_ * n_ / (td + 1.0));
  }
  return 0.0;
}

std::string StepSchedule::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case StepKind::kTheoremDecay:
      os << "theorem-decay(mu=" << mu_ << ",a=" << shift_ << ")";
      break;
    case StepKind::kConstant:
      os << "constant(c=" << c_ << ")";
      break;
    case StepKind::kExperimentDecay:
      os << "decay(c=" << c_ << ",n=" << n_ << ")";
      break;
  }
  return os.str();
}

}  // namespace localsgd
