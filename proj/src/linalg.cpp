#include "localsgd/linalg.hpp"

#include <algorithm>

namespace localsgd {

Vector mean_of(std::span<const Vector> xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty input");
  const Vector& first = xs.front();
  const bool identical = std::all_of(xs.begin() + 1, xs.end(), [&](const Vector& v) {
    return v == first;
  });
  if (identical) return first;

  Vector out(first.size(), 0.0);
  for (const Vector& v : xs) {
    check_same_size(v.size(), out.size(), "mean_of");
    for (std::size_t j = 0; j < v.size(); ++j) out[j] += v[j];
  }
  scale(1.0 / static_cast<double>(xs.size()), out);
  return out;
}

}  // namespace localsgd
