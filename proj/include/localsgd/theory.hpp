#pragma once

#include "localsgd/objective.hpp"
#include "localsgd/schedules.hpp"

namespace localsgd {

// How many vectors one synchronization round moves, in units of ρ.
enum class CommPattern {
  kPairwise,       // 2(K − 1) per round
  kRingAllReduce,  // 2(K − 1)/K per round
};

struct CostModel {
  double rho = 1.0;      // time of one communicated vector, in gradient evaluations
  double epsilon = 0.0;  // target accuracy
  CommPattern pattern = CommPattern::kPairwise;

  // Throws std::invalid_argument unless ρ ≥ 1 and ε ≥ 0.
  void validate() const;
  // Communication cost of one round with K workers, in gradient-time units.
  double round_cost(std::size_t K) const;
};

// Expected suboptimality bound for synchronous local SGD with stepsizes
// 4/(μ(a+t)). Requires a ≥ max{16κ, H}; r0 = ‖x0 − x*‖².
double theorem1_bound(const ProblemConstants& c, std::size_t K, Step T, Step H, std::size_t b,
                      double a, double r0);

// Same for asynchronous local SGD with delay τ; requires a ≥ max{16κ, H + τ}.
double theorem2_bound(const ProblemConstants& c, std::size_t K, Step T, Step H, Step tau,
                      std::size_t b, double a, double r0);

// Asymptotic rate with all O-constants set to 1:
// (1/(μKT) + (κ+H)/(μKT²))·σ²/b + (κH²/(μT²) + (κ³+H³)/(μT³))·G².
double corollary_bound(const ProblemConstants& c, std::size_t K, Step T, Step H, std::size_t b);

// T(ε, H, K) ≈ (1/(Kε))·(½ + ½√(1 + ε(1 + H + H²K))).
double iterations_estimate(double epsilon, double H, double K);

// S(K) = T(ε, 1, 1) / [T(ε, H, K)·(1 + cost(K)/H)], i.e.
// K·c(1, 1) / [c(H, K)·(1 + cost(K)/H)] with c(H, K) = ½ + ½√(1 + ε(1 + H + H²K)),
// where cost(K) is ρ times the vectors per round (2(K − 1) by default). H is
// taken as 1 when K = 1. At ε = 0 this is K/(1 + 2ρ(K − 1)/H).
double speedup(double K, double H, double epsilon, double rho,
               CommPattern pattern = CommPattern::kPairwise);
double speedup(std::size_t K, Step H, const CostModel& cost);

}  // namespace localsgd
