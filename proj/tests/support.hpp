#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "localsgd/dataset.hpp"
#include "localsgd/objective.hpp"
#include "localsgd/rng.hpp"
#include "localsgd/sync_engine.hpp"

namespace fixtures {

inline std::string data_path(const std::string& name) {
  return std::string(LOCALSGD_TEST_DATA) + "/" + name;
}

inline std::shared_ptr<const localsgd::Dataset> logistic50_data() {
  static const auto data =
      std::make_shared<const localsgd::Dataset>(localsgd::load_libsvm(data_path("logistic50.svm")));
  return data;
}

// The 50-point logistic regression fixture with λ = 1/n.
inline std::shared_ptr<const localsgd::LogisticObjective> logistic50() {
  const auto data = logistic50_data();
  return std::make_shared<const localsgd::LogisticObjective>(data, data->default_lambda());
}

// d = 10 quadratic with κ = 4 and gradient variance noise².
inline localsgd::QuadraticProblem quadratic10(double noise = 1.0, std::uint64_t seed = 7) {
  return localsgd::make_quadratic(10, 1.0, 4.0, 64, noise, seed);
}

inline localsgd::Vector random_point(std::size_t d, std::uint64_t seed, double scale = 1.0) {
  localsgd::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  localsgd::Vector x(d);
  for (double& v : x) v = normal(rng);
  return x;
}

inline double max_abs_diff(const localsgd::Vector& a, const localsgd::Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fixtures
