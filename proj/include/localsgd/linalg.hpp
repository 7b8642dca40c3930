#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace localsgd {

using Vector = std::vector<double>;

inline void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a) + " vs " + std::to_string(b) +
                                ")");
  }
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  check_same_size(x.size(), y.size(), "dot");
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * y[j];
  return s;
}

inline double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline double squared_distance(std::span<const double> x,
                               std::span<const double> y) {
  check_same_size(x.size(), y.size(), "squared_distance");
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - y[j];
    s += d * d;
  }
  return s;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_same_size(x.size(), y.size(), "axpy");
  for (std::size_t j = 0; j < x.size(); ++j) y[j] += alpha * x[j];
}

inline void scale(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

inline bool all_finite(std::span<const double> x) {
  for (double v : x) {
    if (!(v - v == 0.0)) return false;
  }
  return true;
}

// Arithmetic mean in ascending index order. Returns the first vector unchanged
// when all inputs are bitwise identical, so synchronized states average to
// themselves exactly.
Vector mean_of(std::span<const Vector> xs);

}  // namespace localsgd
