#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "localsgd/linalg.hpp"

namespace localsgd {

// Error raised while reading LIBSVM text. `line()` is one-based; 0 means the
// error is not tied to a particular line (e.g. an empty file).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

// Read-only view of one example's sparse features. Indices are zero-based and
// strictly increasing.
struct SparseRow {
  std::span<const std::uint32_t> indices;
  std::span<const double> values;

  std::size_t nnz() const { return indices.size(); }
};

// Binary classification data in compressed-row form.
class Dataset {
 public:
  Dataset() = default;

  std::size_t size() const { return labels_.size(); }
  std::size_t dimension() const { return dimension_; }
  std::size_t nnz() const { return indices_.size(); }

  double label(std::size_t i) const { return labels_.at(i); }
  SparseRow row(std::size_t i) const;

  // 1/n, the regularization used for the logistic experiments.
  double default_lambda() const { return 1.0 / static_cast<double>(size()); }

  // Appends one example. Indices are zero-based; validates the invariants.
  void add_example(double label, std::span<const std::uint32_t> indices,
                   std::span<const double> values);
  void set_dimension(std::size_t d);

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t dimension_ = 0;
  std::vector<double> labels_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
};

// Parses `<label> <idx>:<val> ...` lines (one-based indices). When
// `declared_dimension` is set, indices above it are rejected and it becomes the
// dataset dimension; otherwise the largest index seen is used.
Dataset parse_libsvm(std::istream& in,
                     std::optional<std::size_t> declared_dimension = std::nullopt);
Dataset load_libsvm(const std::string& path,
                    std::optional<std::size_t> declared_dimension = std::nullopt);

// Writes the dataset in LIBSVM format with shortest round-trip decimals.
void write_libsvm(std::ostream& out, const Dataset& data);

// Σ value·x[index], summed in ascending index order.
double sparse_dot(const SparseRow& row, std::span<const double> x);

// Random sparse binary-feature classification data (w8a-like). Labels come from
// a random linear separator with `flip_probability` label noise.
Dataset make_synthetic_dataset(std::size_t n, std::size_t d, double density,
                               double flip_probability, std::uint64_t seed);

}  // namespace localsgd
