#include "localsgd/objective.hpp"

#include <algorithm>
#include <cmath>

#include "localsgd/rng.hpp"

namespace localsgd {

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kLogisticL2:
      return "logistic-l2";
    case ObjectiveKind::kQuadratic:
      return "synthetic-quadratic";
  }
  return "unknown";
}

Vector Objective::component_gradient(std::span<const double> x, std::size_t i) const {
  Vector g(dimension(), 0.0);
  add_component_gradient(x, i, 1.0, g);
  return g;
}

void Objective::check_point(std::span<const double> x) const {
  check_same_size(x.size(), dimension(), "objective point");
}

void Objective::check_component(std::size_t i) const {
  if (i >= components()) {
    throw std::out_of_range("component index " + std::to_string(i) +
                            " out of range [0, " + std::to_string(components()) + ")");
  }
}

void ProblemConstants::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("problem constants: mu must be > 0");
  if (!(L >= mu)) throw std::invalid_argument("problem constants: L must be >= mu");
  if (sigma2 < 0.0 || G2 < 0.0) {
    throw std::invalid_argument("problem constants: sigma2, G2 must be >= 0");
  }
}

double logistic_loss(double margin) {
  // log(1 + e^{-m}) without overflow for either sign of m.
  if (margin >= 0.0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

namespace {

// 1 / (1 + e^{m}), the magnitude of the logistic gradient coefficient.
double logistic_weight(double margin) {
  if (margin >= 0.0) {
    const double e = std::exp(-margin);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(margin));
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string(what) + ": non-finite value");
}

}  // namespace

LogisticObjective::LogisticObjective(std::shared_ptr<const Dataset> data, double lambda)
    : data_(std::move(data)), lambda_(lambda) {
  if (!data_ || data_->size() == 0) throw std::invalid_argument("logistic: empty dataset");
  if (!(lambda_ >= 0.0)) throw std::invalid_argument("logistic: lambda must be >= 0");
  for (std::size_t i = 0; i < data_->size(); ++i) {
    const SparseRow r = data_->row(i);
    double s = 0.0;
    for (double v : r.values) s += v * v;
    max_row_sq_norm_ = std::max(max_row_sq_norm_, s);
  }
}

double LogisticObjective::component_value(std::span<const double> x, std::size_t i) const {
  check_point(x);
  check_component(i);
  const double margin = data_->label(i) * sparse_dot(data_->row(i), x);
  const double v = logistic_loss(margin) + 0.5 * lambda_ * squared_norm(x);
  require_finite(v, "logistic component value");
  return v;
}

double LogisticObjective::value(std::span<const double> x) const {
  check_point(x);
  double loss = 0.0;
  for (std::size_t i = 0; i < data_->size(); ++i) {
    loss += logistic_loss(data_->label(i) * sparse_dot(data_->row(i), x));
  }
  const double v = loss / static_cast<double>(data_->size()) + 0.5 * lambda_ * squared_norm(x);
  require_finite(v, "logistic value");
  return v;
}

void LogisticObjective::add_component_gradient(std::span<const double> x, std::size_t i,
                                               double scale, std::span<double> out) const {
  check_point(x);
  check_component(i);
  check_same_size(out.size(), x.size(), "gradient output");
  const SparseRow r = data_->row(i);
  const double b = data_->label(i);
  const double coef = -b * logistic_weight(b * sparse_dot(r, x)) * scale;
  for (std::size_t j = 0; j < r.nnz(); ++j) out[r.indices[j]] += coef * r.values[j];
  if (lambda_ != 0.0) axpy(scale * lambda_, x, out);
}

Vector LogisticObjective::gradient(std::span<const double> x) const {
  check_point(x);
  Vector g(dimension(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(data_->size());
  for (std::size_t i = 0; i < data_->size(); ++i) {
    const SparseRow r = data_->row(i);
    const double b = data_->label(i);
    const double coef = -b * logistic_weight(b * sparse_dot(r, x)) * inv_n;
    for (std::size_t j = 0; j < r.nnz(); ++j) g[r.indices[j]] += coef * r.values[j];
  }
  if (lambda_ != 0.0) axpy(lambda_, x, g);
  return g;
}

std::vector<double> LogisticObjective::hessian(std::span<const double> x) const {
  check_point(x);
  const std::size_t d = dimension();
  std::vector<double> h(d * d, 0.0);
  const double inv_n = 1.0 / static_cast<double>(data_->size());
  for (std::size_t i = 0; i < data_->size(); ++i) {
    const SparseRow r = data_->row(i);
    const double s = logistic_weight(data_->label(i) * sparse_dot(r, x));
    const double w = s * (1.0 - s) * inv_n;
    for (std::size_t p = 0; p < r.nnz(); ++p) {
      const double wp = w * r.values[p];
      double* hrow = h.data() + static_cast<std::size_t>(r.indices[p]) * d;
      for (std::size_t q = 0; q < r.nnz(); ++q) hrow[r.indices[q]] += wp * r.values[q];
    }
  }
  for (std::size_t j = 0; j < d; ++j) h[j * d + j] += lambda_;
  return h;
}

double logistic_value(std::span<const double> x, const Dataset& data, double lambda) {
  check_same_size(x.size(), data.dimension(), "logistic_value");
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    loss += logistic_loss(data.label(i) * sparse_dot(data.row(i), x));
  }
  const double v = loss / static_cast<double>(data.size()) + 0.5 * lambda * squared_norm(x);
  require_finite(v, "logistic_value");
  return v;
}

Vector stochastic_gradient(std::span<const double> x, std::size_t i, const Dataset& data,
                           double lambda) {
  check_same_size(x.size(), data.dimension(), "stochastic_gradient");
  if (i >= data.size()) throw std::out_of_range("stochastic_gradient: index out of range");
  Vector g(x.begin(), x.end());
  scale(lambda, g);
  const SparseRow r = data.row(i);
  const double b = data.label(i);
  const double coef = -b * logistic_weight(b * sparse_dot(r, x));
  for (std::size_t j = 0; j < r.nnz(); ++j) g[r.indices[j]] += coef * r.values[j];
  return g;
}

QuadraticObjective::QuadraticObjective(Vector diagonal, std::vector<Vector> offsets)
    : diagonal_(std::move(diagonal)), offsets_(std::move(offsets)) {
  if (diagonal_.empty()) throw std::invalid_argument("quadratic: empty diagonal");
  if (offsets_.empty()) throw std::invalid_argument("quadratic: no components");
  for (double a : diagonal_) {
    if (!(a > 0.0)) throw std::invalid_argument("quadratic: diagonal must be positive");
  }
  mean_offset_.assign(diagonal_.size(), 0.0);
  for (const Vector& b : offsets_) {
    check_same_size(b.size(), diagonal_.size(), "quadratic offset");
    axpy(1.0, b, mean_offset_);
  }
  const bool identical = std::all_of(offsets_.begin(), offsets_.end(),
                                     [&](const Vector& b) { return b == offsets_.front(); });
  if (identical) {
    mean_offset_ = offsets_.front();
  } else {
    scale(1.0 / static_cast<double>(offsets_.size()), mean_offset_);
    for (const Vector& b : offsets_) offset_variance_ += squared_distance(b, mean_offset_);
    offset_variance_ /= static_cast<double>(offsets_.size());
  }
}

double QuadraticObjective::component_value(std::span<const double> x, std::size_t i) const {
  check_point(x);
  check_component(i);
  double v = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    v += 0.5 * diagonal_[j] * x[j] * x[j] - offsets_[i][j] * x[j];
  }
  return v;
}

double QuadraticObjective::value(std::span<const double> x) const {
  check_point(x);
  double v = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    v += 0.5 * diagonal_[j] * x[j] * x[j] - mean_offset_[j] * x[j];
  }
  return v;
}

void QuadraticObjective::add_component_gradient(std::span<const double> x, std::size_t i,
                                                double scale, std::span<double> out) const {
  check_point(x);
  check_component(i);
  check_same_size(out.size(), x.size(), "gradient output");
  const Vector& b = offsets_[i];
  for (std::size_t j = 0; j < x.size(); ++j) out[j] += scale * (diagonal_[j] * x[j] - b[j]);
}

Vector QuadraticObjective::gradient(std::span<const double> x) const {
  check_point(x);
  Vector g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) g[j] = diagonal_[j] * x[j] - mean_offset_[j];
  return g;
}

std::vector<double> QuadraticObjective::hessian(std::span<const double> x) const {
  check_point(x);
  const std::size_t d = dimension();
  std::vector<double> h(d * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) h[j * d + j] = diagonal_[j];
  return h;
}

QuadraticProblem make_quadratic(std::size_t d, double mu, double L, std::size_t n,
                                double noise, std::uint64_t seed) {
  if (d == 0 || n == 0) throw std::invalid_argument("make_quadratic: d and n must be >= 1");
  if (!(mu > 0.0)) throw std::invalid_argument("make_quadratic: mu must be > 0");
  if (mu > L) throw std::invalid_argument("make_quadratic: mu > L");
  if (d == 1 && mu != L) {
    throw std::invalid_argument("make_quadratic: d = 1 needs mu == L to attain both ends");
  }
  if (noise < 0.0) throw std::invalid_argument("make_quadratic: noise must be >= 0");
  if (noise > 0.0 && n < 2) {
    throw std::invalid_argument("make_quadratic: noise > 0 needs at least two components");
  }

  Vector diagonal(d);
  for (std::size_t j = 0; j < d; ++j) {
    diagonal[j] = d == 1 ? mu
                         : mu + (L - mu) * static_cast<double>(j) / static_cast<double>(d - 1);
  }
  diagonal.back() = L;

  Rng rng = substream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector mean(d);
  for (double& v : mean) v = normal(rng);

  std::vector<Vector> offsets(n, mean);
  if (noise > 0.0) {
    std::vector<Vector> z(n, Vector(d));
    Vector zbar(d, 0.0);
    for (Vector& zi : z) {
      for (double& v : zi) v = normal(rng);
      axpy(1.0, zi, zbar);
    }
    scale(1.0 / static_cast<double>(n), zbar);
    double spread = 0.0;
    for (Vector& zi : z) {
      axpy(-1.0, zbar, zi);
      spread += squared_norm(zi);
    }
    const double s = noise / std::sqrt(spread / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) axpy(s, z[i], offsets[i]);
  }

  auto objective = std::make_shared<const QuadraticObjective>(diagonal, std::move(offsets));

  QuadraticProblem problem;
  ReferenceSolution& sol = problem.solution;
  sol.x_star.resize(d);
  const Vector& bbar = objective->mean_offset();
  for (std::size_t j = 0; j < d; ++j) sol.x_star[j] = bbar[j] / diagonal[j];
  sol.f_star = objective->value(sol.x_star);
  sol.provenance = Provenance::kAnalytic;
  sol.gradient_norm = std::sqrt(squared_norm(objective->gradient(sol.x_star)));

  problem.constants.mu = mu;
  problem.constants.L = L;
  problem.constants.sigma2 = objective->offset_variance();
  // Second moment at the origin: ‖b̄‖² + σ².
  problem.constants.G2 = squared_norm(bbar) + problem.constants.sigma2;
  problem.objective = std::move(objective);
  return problem;
}

GradientMoments gradient_moments(const Objective& f, std::span<const double> x,
                                 const EstimateOptions& options) {
  const Vector full = f.gradient(x);
  const std::size_t n = f.components();
  Vector g(f.dimension());
  GradientMoments m;
  const auto accumulate = [&](std::size_t i) {
    std::fill(g.begin(), g.end(), 0.0);
    f.add_component_gradient(x, i, 1.0, g);
    m.second_moment += squared_norm(g);
    m.variance += squared_distance(g, full);
  };
  if (n <= options.exact_limit) {
    for (std::size_t i = 0; i < n; ++i) accumulate(i);
    m.variance /= static_cast<double>(n);
    m.second_moment /= static_cast<double>(n);
  } else {
    if (options.trials == 0) throw std::invalid_argument("gradient_moments: trials must be >= 1");
    Rng rng = substream(options.seed, kEstimateStreamTag);
    for (std::size_t s = 0; s < options.trials; ++s) accumulate(uniform_index(rng, n));
    m.variance /= static_cast<double>(options.trials);
    m.second_moment /= static_cast<double>(options.trials);
  }
  return m;
}

ProblemConstants estimate_constants(const Objective& f, std::span<const Vector> sample_points,
                                    const EstimateOptions& options) {
  if (sample_points.empty()) throw std::invalid_argument("estimate_constants: no sample points");
  if (options.trials == 0) throw std::invalid_argument("estimate_constants: trials must be >= 1");
  ProblemConstants c;
  if (const auto* logistic = dynamic_cast<const LogisticObjective*>(&f)) {
    c.mu = logistic->lambda();
    c.L = logistic->lambda() + logistic->max_row_squared_norm() / 4.0;
  } else if (const auto* quad = dynamic_cast<const QuadraticObjective*>(&f)) {
    const auto [lo, hi] = std::minmax_element(quad->diagonal().begin(), quad->diagonal().end());
    c.mu = *lo;
    c.L = *hi;
  } else {
    throw std::invalid_argument("estimate_constants: unsupported objective");
  }
  for (std::size_t p = 0; p < sample_points.size(); ++p) {
    EstimateOptions per_point = options;
    per_point.seed = replicate_seed(options.seed, p);
    const GradientMoments m = gradient_moments(f, sample_points[p], per_point);
    c.sigma2 = std::max(c.sigma2, m.variance);
    c.G2 = std::max(c.G2, m.second_moment);
  }
  return c;
}

}  // namespace localsgd
