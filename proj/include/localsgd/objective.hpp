#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "localsgd/dataset.hpp"
#include "localsgd/linalg.hpp"

namespace localsgd {

enum class ObjectiveKind { kLogisticL2, kQuadratic };

std::string to_string(ObjectiveKind kind);

// Finite-sum objective f(x) = (1/n) Σ f_i(x). Implementations are immutable
// after construction and safe to share across concurrent runs.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual ObjectiveKind kind() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::size_t components() const = 0;

  virtual double value(std::span<const double> x) const = 0;
  virtual double component_value(std::span<const double> x, std::size_t i) const = 0;

  // out += scale · ∇f_i(x)
  virtual void add_component_gradient(std::span<const double> x, std::size_t i,
                                      double scale, std::span<double> out) const = 0;
  virtual Vector gradient(std::span<const double> x) const = 0;

  // Dense row-major d×d Hessian of f.
  virtual std::vector<double> hessian(std::span<const double> x) const = 0;

  Vector component_gradient(std::span<const double> x, std::size_t i) const;

 protected:
  void check_point(std::span<const double> x) const;
  void check_component(std::size_t i) const;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

// Smoothness, strong convexity and the variance / second-moment bounds.
struct ProblemConstants {
  double L = 0.0;
  double mu = 0.0;
  double sigma2 = 0.0;
  double G2 = 0.0;

  double kappa() const { return L / mu; }
  void validate() const;
};

enum class Provenance { kAnalytic, kNumeric };

struct ReferenceSolution {
  Vector x_star;
  double f_star = 0.0;
  Provenance provenance = Provenance::kNumeric;
  double gradient_norm = 0.0;
};

// f(x) = (1/n) Σ log(1 + exp(−b_i a_iᵀx)) + (λ/2)‖x‖².
class LogisticObjective final : public Objective {
 public:
  LogisticObjective(std::shared_ptr<const Dataset> data, double lambda);

  ObjectiveKind kind() const override { return ObjectiveKind::kLogisticL2; }
  std::size_t dimension() const override { return data_->dimension(); }
  std::size_t components() const override { return data_->size(); }

  double value(std::span<const double> x) const override;
  double component_value(std::span<const double> x, std::size_t i) const override;
  void add_component_gradient(std::span<const double> x, std::size_t i, double scale,
                              std::span<double> out) const override;
  Vector gradient(std::span<const double> x) const override;
  std::vector<double> hessian(std::span<const double> x) const override;

  double lambda() const { return lambda_; }
  const Dataset& data() const { return *data_; }
  double max_row_squared_norm() const { return max_row_sq_norm_; }

 private:
  std::shared_ptr<const Dataset> data_;
  double lambda_;
  double max_row_sq_norm_ = 0.0;
};

// f_i(x) = ½ xᵀAx − b_iᵀx with a shared diagonal A.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(Vector diagonal, std::vector<Vector> offsets);

  ObjectiveKind kind() const override { return ObjectiveKind::kQuadratic; }
  std::size_t dimension() const override { return diagonal_.size(); }
  std::size_t components() const override { return offsets_.size(); }

  double value(std::span<const double> x) const override;
  double component_value(std::span<const double> x, std::size_t i) const override;
  void add_component_gradient(std::span<const double> x, std::size_t i, double scale,
                              std::span<double> out) const override;
  Vector gradient(std::span<const double> x) const override;
  std::vector<double> hessian(std::span<const double> x) const override;

  const Vector& diagonal() const { return diagonal_; }
  const Vector& mean_offset() const { return mean_offset_; }
  // Exact (1/n) Σ‖b_i − b̄‖², the gradient variance at every point.
  double offset_variance() const { return offset_variance_; }

 private:
  Vector diagonal_;
  std::vector<Vector> offsets_;
  Vector mean_offset_;
  double offset_variance_ = 0.0;
};

// Numerically stable log(1 + exp(−m)).
double logistic_loss(double margin);

double logistic_value(std::span<const double> x, const Dataset& data, double lambda);
Vector stochastic_gradient(std::span<const double> x, std::size_t i, const Dataset& data,
                           double lambda);

struct QuadraticProblem {
  std::shared_ptr<const QuadraticObjective> objective;
  ReferenceSolution solution;
  ProblemConstants constants;
};

// Synthetic quadratic with Hessian spectrum spread evenly over [μ, L] (both
// endpoints attained for d ≥ 2) and per-component gradient variance exactly
// noise². Requires μ = L when d = 1 and n ≥ 2 when noise > 0.
QuadraticProblem make_quadratic(std::size_t d, double mu, double L, std::size_t n,
                                double noise, std::uint64_t seed);

struct EstimateOptions {
  // Components are enumerated exactly when n is at most this; otherwise
  // `trials` indices are sampled per point.
  std::size_t exact_limit = 20000;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
};

// Per-point gradient statistics: E_i‖∇f_i(x) − ∇f(x)‖² and E_i‖∇f_i(x)‖².
struct GradientMoments {
  double variance = 0.0;
  double second_moment = 0.0;
};

GradientMoments gradient_moments(const Objective& f, std::span<const double> x,
                                 const EstimateOptions& options = {});

// σ², G² as maxima over the sample points; L, μ from the objective's analytic
// formulas (logistic: μ = λ, L = λ + max‖a_i‖²/4; quadratic: spectrum ends).
ProblemConstants estimate_constants(const Objective& f,
                                    std::span<const Vector> sample_points,
                                    const EstimateOptions& options = {});

}  // namespace localsgd
