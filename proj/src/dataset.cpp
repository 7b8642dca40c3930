#include "localsgd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "localsgd/rng.hpp"

namespace localsgd {

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message
                                  : message),
      line_(line),
      reason_(message) {}

SparseRow Dataset::row(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("Dataset::row: index out of range");
  const std::size_t begin = offsets_[i];
  const std::size_t count = offsets_[i + 1] - begin;
  return {std::span(indices_).subspan(begin, count),
          std::span(values_).subspan(begin, count)};
}

void Dataset::add_example(double label, std::span<const std::uint32_t> indices,
                          std::span<const double> values) {
  if (label != 1.0 && label != -1.0) {
    throw std::invalid_argument("label must be +1 or -1");
  }
  if (indices.size() != values.size()) {
    throw std::invalid_argument("indices and values differ in length");
  }
  for (std::size_t j = 1; j < indices.size(); ++j) {
    if (indices[j] <= indices[j - 1]) {
      throw std::invalid_argument("non-increasing index");
    }
  }
  labels_.push_back(label);
  indices_.insert(indices_.end(), indices.begin(), indices.end());
  values_.insert(values_.end(), values.begin(), values.end());
  offsets_.push_back(indices_.size());
  if (!indices.empty()) {
    dimension_ = std::max<std::size_t>(dimension_, indices.back() + 1);
  }
}

void Dataset::set_dimension(std::size_t d) {
  if (!indices_.empty()) {
    const auto max_index = *std::max_element(indices_.begin(), indices_.end());
    if (max_index >= d) {
      throw std::invalid_argument("dimension smaller than largest feature index");
    }
  }
  dimension_ = d;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end && !token.empty();
}

}  // namespace

Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> declared_dimension) {
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = trim(view);
    if (view.empty()) continue;

    indices.clear();
    values.clear();
    bool first = true;
    double label = 0.0;
    while (!view.empty()) {
      const auto stop = view.find_first_of(" \t");
      const std::string_view token = view.substr(0, stop);
      view = stop == std::string_view::npos ? std::string_view{}
                                            : trim(view.substr(stop));
      if (first) {
        first = false;
        if (!parse_number(token, label)) {
          throw ParseError(line_no, "malformed label '" + std::string(token) + "'");
        }
        if (label != 1.0 && label != -1.0) {
          throw ParseError(line_no, "label must be +1 or -1, got '" +
                                        std::string(token) + "'");
        }
        continue;
      }
      const auto colon = token.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(line_no, "malformed token '" + std::string(token) + "'");
      }
      std::uint64_t index = 0;
      double value = 0.0;
      if (!parse_number(token.substr(0, colon), index) ||
          !parse_number(token.substr(colon + 1), value)) {
        throw ParseError(line_no, "malformed token '" + std::string(token) + "'");
      }
      if (index == 0) {
        throw ParseError(line_no, "feature index must be >= 1");
      }
      if (!std::isfinite(value)) {
        throw ParseError(line_no, "non-finite feature value");
      }
      if (declared_dimension && index > *declared_dimension) {
        throw ParseError(line_no, "index " + std::to_string(index) +
                                      " exceeds declared dimension " +
                                      std::to_string(*declared_dimension));
      }
      if (index > 0xFFFFFFFFULL) {
        throw ParseError(line_no, "feature index too large");
      }
      const auto zero_based = static_cast<std::uint32_t>(index - 1);
      if (!indices.empty() && zero_based <= indices.back()) {
        throw ParseError(line_no, "non-increasing index");
      }
      indices.push_back(zero_based);
      values.push_back(value);
    }
    data.add_example(label, indices, values);
  }
  if (data.size() == 0) throw ParseError(0, "empty file: no examples");
  if (declared_dimension) data.set_dimension(*declared_dimension);
  return data;
}

Dataset load_libsvm(const std::string& path, std::optional<std::size_t> declared_dimension) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  return parse_libsvm(in, declared_dimension);
}

void write_libsvm(std::ostream& out, const Dataset& data) {
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << (data.label(i) > 0 ? "+1" : "-1");
    const SparseRow r = data.row(i);
    for (std::size_t j = 0; j < r.nnz(); ++j) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), r.values[j]);
      out << ' ' << (r.indices[j] + 1) << ':' << std::string_view(buf, ptr - buf);
    }
    out << '\n';
  }
}

double sparse_dot(const SparseRow& row, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t j = 0; j < row.nnz(); ++j) {
    if (row.indices[j] >= x.size()) {
      throw std::out_of_range("sparse_dot: feature index " +
                              std::to_string(row.indices[j] + 1) +
                              " exceeds vector dimension " + std::to_string(x.size()));
    }
    s += row.values[j] * x[row.indices[j]];
  }
  return s;
}

Dataset make_synthetic_dataset(std::size_t n, std::size_t d, double density,
                               double flip_probability, std::uint64_t seed) {
  if (n == 0 || d == 0) throw std::invalid_argument("synthetic dataset: n, d must be positive");
  if (!(density > 0.0 && density <= 1.0)) {
    throw std::invalid_argument("synthetic dataset: density must be in (0, 1]");
  }
  Rng rng = substream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution on(density);
  std::bernoulli_distribution flip(flip_probability);

  Vector separator(d);
  for (double& w : separator) w = normal(rng);

  Dataset data;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
  for (std::size_t i = 0; i < n; ++i) {
    indices.clear();
    values.clear();
    double margin = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (on(rng)) {
        indices.push_back(static_cast<std::uint32_t>(j));
        values.push_back(1.0);
        margin += separator[j];
      }
    }
    double label = margin >= 0.0 ? 1.0 : -1.0;
    if (flip(rng)) label = -label;
    data.add_example(label, indices, values);
  }
  data.set_dimension(d);
  return data;
}

}  // namespace localsgd
