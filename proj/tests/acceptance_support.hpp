#pragma once

#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "localsgd/dataset.hpp"
#include "localsgd/harness.hpp"
#include "localsgd/objective.hpp"

namespace acceptance {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kFail;
  std::string detail;
};

inline Outcome pass_if(bool ok, const std::string& detail) {
  return {ok ? Status::kPass : Status::kFail, detail};
}

inline Outcome skip(const std::string& reason) { return {Status::kSkip, reason}; }

template <typename... Parts>
std::string cat(const Parts&... parts) {
  std::ostringstream out;
  out.precision(6);
  (out << ... << parts);
  return out.str();
}

struct Criterion {
  std::string id;
  std::function<Outcome()> check;
};

// Runs every criterion, prints one line each and returns the process exit code:
// 0 when nothing failed.
inline int run_all(const std::vector<Criterion>& criteria) {
  bool failed = false;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* label = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::cout << "criterion " << c.id << ": " << label << "  " << o.detail << std::endl;
    failed = failed || o.status == Status::kFail;
  }
  return failed ? 1 : 0;
}

// Location of the w8a file: $LOCALSGD_W8A, else data/w8a in the source tree.
inline std::optional<std::string> w8a_path() {
  if (const char* env = std::getenv("LOCALSGD_W8A"); env && *env) {
    if (std::filesystem::exists(env)) return std::string(env);
    return std::nullopt;
  }
  if (std::filesystem::exists(LOCALSGD_W8A_DEFAULT)) return std::string(LOCALSGD_W8A_DEFAULT);
  return std::nullopt;
}

inline const char* kW8aMissing =
    "w8a not found (set LOCALSGD_W8A or run tools/fetch_w8a.sh)";

inline constexpr double kW8aFStar = 0.126433176216545;
inline constexpr double kW8aFStarTolerance = 1e-5;
inline constexpr double kLn2Tolerance = 1e-9;

inline Outcome w8a_reference_value(const std::string& path) {
  const localsgd::Dataset data = localsgd::load_libsvm(path, 300);
  const localsgd::ReferenceSolution r =
      localsgd::compute_reference_fstar(data, data.default_lambda(), 1e-10);
  const double err = std::abs(r.f_star - kW8aFStar);
  return pass_if(err <= kW8aFStarTolerance,
                 cat("f*=", std::to_string(r.f_star), " |f*-0.126433176216545|=", err,
                     " (tol ", kW8aFStarTolerance, ")"));
}

inline Outcome w8a_parse(const std::string& path) {
  const localsgd::Dataset data = localsgd::load_libsvm(path, 300);
  const localsgd::LogisticObjective f(std::make_shared<const localsgd::Dataset>(data),
                                      data.default_lambda());
  const double f0 = f.value(localsgd::Vector(300, 0.0));
  const bool ok = data.size() == 49749 && data.dimension() == 300 &&
                  std::abs(f0 - std::log(2.0)) <= kLn2Tolerance;
  return pass_if(ok, cat("w8a n=", data.size(), " d=", data.dimension(), " |f(0)-ln2|=",
                         std::abs(f0 - std::log(2.0))));
}

}  // namespace acceptance
