#include "localsgd/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "localsgd/averaging.hpp"

namespace localsgd {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void check_common(const ProblemConstants& c, std::size_t K, Step T, Step H, std::size_t b,
                  double r0) {
  c.validate();
  require(K >= 1, "K must be >= 1");
  require(T >= 1, "T must be >= 1");
  require(H >= 1, "H must be >= 1");
  require(b >= 1, "b must be >= 1");
  require(r0 >= 0.0, "r0 = |x0 - x*|^2 must be >= 0");
}

double bound_with_deviation(const ProblemConstants& c, std::size_t K, Step T, std::size_t b,
                            double a, double r0, double deviation_term) {
  const double S = sum_of_weights(a, T);
  const double t = static_cast<double>(T);
  const double bias = c.mu * a * a * a * r0 / (2.0 * S);
  const double variance =
      4.0 * t * (t + 2.0 * a) * (c.sigma2 / static_cast<double>(b)) /
      (c.mu * static_cast<double>(K) * S);
  const double deviation = deviation_term * t * c.G2 * c.L / (c.mu * c.mu * S);
  return bias + variance + deviation;
}

}  // namespace

void CostModel::validate() const {
  require(rho >= 1.0, "cost model: rho must be >= 1");
  require(epsilon >= 0.0, "cost model: epsilon must be >= 0");
}

double CostModel::round_cost(std::size_t K) const {
  const double k = static_cast<double>(K);
  switch (pattern) {
    case CommPattern::kPairwise:
      return 2.0 * rho * (k - 1.0);
    case CommPattern::kRingAllReduce:
      return 2.0 * rho * (k - 1.0) / k;
  }
  return 0.0;
}

double theorem1_bound(const ProblemConstants& c, std::size_t K, Step T, Step H, std::size_t b,
                      double a, double r0) {
  check_common(c, K, T, H, b, r0);
  require(a >= 16.0 * c.kappa(), "shift a must satisfy a >= 16 kappa (a=" + std::to_string(a) +
                                     ", 16 kappa=" + std::to_string(16.0 * c.kappa()) + ")");
  require(a >= static_cast<double>(H),
          "shift a must satisfy a >= H (a=" + std::to_string(a) + ", H=" + std::to_string(H) + ")");
  const double h = static_cast<double>(H);
  return bound_with_deviation(c, K, T, b, a, r0, 256.0 * h * h);
}

double theorem2_bound(const ProblemConstants& c, std::size_t K, Step T, Step H, Step tau,
                      std::size_t b, double a, double r0) {
  check_common(c, K, T, H, b, r0);
  require(tau >= 0, "tau must be >= 0");
  require(a >= 16.0 * c.kappa(), "shift a must satisfy a >= 16 kappa (a=" + std::to_string(a) +
                                     ", 16 kappa=" + std::to_string(16.0 * c.kappa()) + ")");
  require(a >= static_cast<double>(H + tau),
          "shift a must satisfy a >= H + tau (a=" + std::to_string(a) +
              ", H + tau=" + std::to_string(H + tau) + ")");
  const double ht = static_cast<double>(H + tau);
  return bound_with_deviation(c, K, T, b, a, r0, 768.0 * ht * ht);
}

double corollary_bound(const ProblemConstants& c, std::size_t K, Step T, Step H, std::size_t b) {
  check_common(c, K, T, H, b, 0.0);
  const double k = static_cast<double>(K);
  const double t = static_cast<double>(T);
  const double h = static_cast<double>(H);
  const double kappa = c.kappa();
  const double noise = (1.0 / (c.mu * k * t) + (kappa + h) / (c.mu * k * t * t)) *
                       c.sigma2 / static_cast<double>(b);
  const double drift = (kappa * h * h / (c.mu * t * t) +
                        (kappa * kappa * kappa + h * h * h) / (c.mu * t * t * t)) *
                       c.G2;
  return noise + drift;
}

namespace {

double accuracy_factor(double epsilon, double H, double K) {
  return 0.5 + 0.5 * std::sqrt(1.0 + epsilon * (1.0 + H + H * H * K));
}

}  // namespace

double iterations_estimate(double epsilon, double H, double K) {
  require(epsilon > 0.0, "iterations_estimate: epsilon must be > 0");
  require(H >= 1.0, "iterations_estimate: H must be >= 1");
  require(K >= 1.0, "iterations_estimate: K must be >= 1");
  return accuracy_factor(epsilon, H, K) / (K * epsilon);
}

double speedup(double K, double H, double epsilon, double rho, CommPattern pattern) {
  require(K >= 1.0, "speedup: K must be >= 1");
  require(H >= 1.0, "speedup: H must be >= 1");
  require(epsilon >= 0.0, "speedup: epsilon must be >= 0");
  require(rho >= 1.0, "speedup: rho must be >= 1");
  const double vectors = pattern == CommPattern::kPairwise ? 2.0 * (K - 1.0)
                                                           : 2.0 * (K - 1.0) / K;
  // A single worker never drifts, so its interval does not matter.
  const double h = K == 1.0 ? 1.0 : H;
  const double slowdown = accuracy_factor(epsilon, h, K) / accuracy_factor(epsilon, 1.0, 1.0);
  return K / (slowdown * (1.0 + rho * vectors / H));
}

double speedup(std::size_t K, Step H, const CostModel& cost) {
  cost.validate();
  return speedup(static_cast<double>(K), static_cast<double>(H), cost.epsilon, cost.rho,
                 cost.pattern);
}

}  // namespace localsgd
