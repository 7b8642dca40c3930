#include "localsgd/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include <Eigen/Dense>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "localsgd/parallel.hpp"

namespace localsgd {

ConfigError::ConfigError(const std::string& field, const std::string& reason)
    : std::runtime_error("config field '" + field + "': " + reason), field_(field) {}

std::string to_string(StepFamily family) {
  return family == StepFamily::kDecay ? "decay" : "constant";
}

StepSchedule make_stepsize(StepFamily family, double c, std::size_t n) {
  if (family == StepFamily::kDecay) {
    return StepSchedule::experiment_decay(c, static_cast<double>(n));
  }
  return StepSchedule::constant(c);
}

LoadedProblem load_problem(const ProblemSpec& spec) {
  LoadedProblem out;
  if (spec.quadratic) {
    const QuadraticSpec& q = *spec.quadratic;
    QuadraticProblem p = make_quadratic(q.dimension, q.mu, q.L, q.components, q.noise, q.seed);
    out.objective = p.objective;
    out.known_solution = p.solution;
    out.known_constants = p.constants;
    out.description = "quadratic d=" + std::to_string(q.dimension);
    return out;
  }
  std::shared_ptr<const Dataset> data;
  if (spec.logistic) {
    const LogisticSpec& s = *spec.logistic;
    data = std::make_shared<const Dataset>(
        make_synthetic_dataset(s.examples, s.dimension, s.density, s.flip_probability, s.seed));
    out.description = "synthetic logistic n=" + std::to_string(s.examples);
  } else if (!spec.dataset_path.empty()) {
    data = std::make_shared<const Dataset>(load_libsvm(spec.dataset_path, spec.declared_dimension));
    out.description = spec.dataset_path;
  } else {
    throw ConfigError("problem", "need a dataset path or a synthetic kind");
  }
  const double lambda = spec.lambda.value_or(data->default_lambda());
  out.objective = std::make_shared<const LogisticObjective>(data, lambda);
  return out;
}

void ExperimentConfig::validate() const {
  if (epsilons.empty()) throw ConfigError("sweep.epsilon", "list must not be empty");
  if (workers.empty()) throw ConfigError("sweep.K", "list must not be empty");
  if (local_steps.empty()) throw ConfigError("sweep.H", "list must not be empty");
  if (batches.empty()) throw ConfigError("sweep.b", "list must not be empty");
  if (families.empty()) throw ConfigError("sweep.families", "list must not be empty");
  for (double e : epsilons) {
    if (!(e > 0.0)) throw ConfigError("sweep.epsilon", "values must be > 0");
  }
  for (std::size_t k : workers) {
    if (k < 1) throw ConfigError("sweep.K", "values must be >= 1");
  }
  for (Step h : local_steps) {
    if (h < 1) throw ConfigError("sweep.H", "values must be >= 1");
  }
  for (std::size_t b : batches) {
    if (b < 1) throw ConfigError("sweep.b", "values must be >= 1");
  }
  if (c_min_exponent > c_max_exponent) throw ConfigError("sweep.c_min", "must be <= c_max");
  if (c_start_exponent < c_min_exponent || c_start_exponent > c_max_exponent) {
    throw ConfigError("sweep.c_start", "must lie in [c_min, c_max]");
  }
  if (!(epochs_cap > 0.0)) throw ConfigError("sweep.epochs_cap", "must be > 0");
  if (eval_stride < 0) throw ConfigError("sweep.eval_stride", "must be >= 0");
  if (!(cost.rho >= 1.0)) throw ConfigError("cost.rho", "must be >= 1");
  if (!(fstar_tolerance > 0.0)) throw ConfigError("sweep.fstar_tolerance", "must be > 0");
}

namespace {

using boost::property_tree::ptree;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_scalar(const std::string& field, const std::string& raw) {
  const std::string text = trim(raw);
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(field, "cannot parse '" + text + "'");
  }
  return value;
}

template <typename T>
std::optional<T> optional_scalar(const ptree& tree, const std::string& field) {
  const auto raw = tree.get_optional<std::string>(ptree::path_type(field, '.'));
  if (!raw) return std::nullopt;
  return parse_scalar<T>(field, *raw);
}

template <typename T>
std::vector<T> parse_list(const ptree& tree, const std::string& field) {
  const auto raw = tree.get_optional<std::string>(ptree::path_type(field, '.'));
  if (!raw) throw ConfigError(field, "missing");
  std::vector<T> out;
  std::stringstream ss(*raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_scalar<T>(field, item));
  return out;
}

bool parse_bool(const std::string& field, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(field, "expected true or false, got '" + v + "'");
}

ProblemSpec parse_problem(const ptree& tree) {
  ProblemSpec spec;
  const std::string kind = trim(tree.get<std::string>("problem.kind", ""));
  if (const auto path = tree.get_optional<std::string>("problem.dataset")) {
    spec.dataset_path = trim(*path);
  }
  spec.declared_dimension = optional_scalar<std::size_t>(tree, "problem.dimension");
  spec.lambda = optional_scalar<double>(tree, "problem.lambda");
  if (spec.lambda && !(*spec.lambda > 0.0)) throw ConfigError("problem.lambda", "must be > 0");
  if (kind == "quadratic") {
    QuadraticSpec q;
    q.dimension = optional_scalar<std::size_t>(tree, "problem.d").value_or(q.dimension);
    q.mu = optional_scalar<double>(tree, "problem.mu").value_or(q.mu);
    q.L = optional_scalar<double>(tree, "problem.L").value_or(q.L);
    q.components = optional_scalar<std::size_t>(tree, "problem.n").value_or(q.components);
    q.noise = optional_scalar<double>(tree, "problem.noise").value_or(q.noise);
    q.seed = optional_scalar<std::uint64_t>(tree, "problem.seed").value_or(q.seed);
    if (!(q.mu > 0.0)) throw ConfigError("problem.mu", "must be > 0");
    if (!(q.L >= q.mu)) throw ConfigError("problem.L", "must be >= mu");
    if (q.noise < 0.0) throw ConfigError("problem.noise", "must be >= 0");
    spec.quadratic = q;
  } else if (kind == "logistic") {
    LogisticSpec s;
    s.examples = optional_scalar<std::size_t>(tree, "problem.n").value_or(s.examples);
    s.dimension = optional_scalar<std::size_t>(tree, "problem.d").value_or(s.dimension);
    s.density = optional_scalar<double>(tree, "problem.density").value_or(s.density);
    s.flip_probability = optional_scalar<double>(tree, "problem.flip").value_or(s.flip_probability);
    s.seed = optional_scalar<std::uint64_t>(tree, "problem.seed").value_or(s.seed);
    spec.logistic = s;
  } else if (!kind.empty()) {
    throw ConfigError("problem.kind", "expected quadratic or logistic, got '" + kind + "'");
  } else if (spec.dataset_path.empty()) {
    throw ConfigError("problem.dataset", "missing (or set problem.kind)");
  }
  return spec;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& in) {
  ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("file", "line " + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig c;
  c.problem = parse_problem(tree);
  c.epsilons = parse_list<double>(tree, "sweep.epsilon");
  c.workers = parse_list<std::size_t>(tree, "sweep.K");
  c.local_steps = parse_list<Step>(tree, "sweep.H");
  c.batches = parse_list<std::size_t>(tree, "sweep.b");
  if (const auto fam = tree.get_optional<std::string>("sweep.families")) {
    c.families.clear();
    std::stringstream ss(*fam);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item == "decay") {
        c.families.push_back(StepFamily::kDecay);
      } else if (item == "constant") {
        c.families.push_back(StepFamily::kConstant);
      } else {
        throw ConfigError("sweep.families", "unknown family '" + item + "'");
      }
    }
  }
  c.c_min_exponent = optional_scalar<int>(tree, "sweep.c_min").value_or(c.c_min_exponent);
  c.c_max_exponent = optional_scalar<int>(tree, "sweep.c_max").value_or(c.c_max_exponent);
  c.c_start_exponent = optional_scalar<int>(tree, "sweep.c_start").value_or(c.c_start_exponent);
  c.epochs_cap = optional_scalar<double>(tree, "sweep.epochs_cap").value_or(c.epochs_cap);
  c.eval_stride = optional_scalar<Step>(tree, "sweep.eval_stride").value_or(c.eval_stride);
  c.f_star = optional_scalar<double>(tree, "sweep.f_star");
  c.fstar_tolerance =
      optional_scalar<double>(tree, "sweep.fstar_tolerance").value_or(c.fstar_tolerance);
  c.seed = optional_scalar<std::uint64_t>(tree, "sweep.seed").value_or(c.seed);
  c.cost.rho = optional_scalar<double>(tree, "cost.rho").value_or(c.cost.rho);
  const std::string pattern = trim(tree.get<std::string>("cost.pattern", "pairwise"));
  if (pattern == "pairwise") {
    c.cost.pattern = CommPattern::kPairwise;
  } else if (pattern == "ring") {
    c.cost.pattern = CommPattern::kRingAllReduce;
  } else {
    throw ConfigError("cost.pattern", "expected pairwise or ring, got '" + pattern + "'");
  }
  c.output_directory = trim(tree.get<std::string>("output.directory", "."));
  if (const auto svg = tree.get_optional<std::string>("output.svg")) {
    c.svg = parse_bool("output.svg", *svg);
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("file", "cannot open " + path);
  ExperimentConfig c = parse_experiment_config(in);
  // Relative paths in the file are relative to the file itself.
  const auto base = std::filesystem::path(path).parent_path();
  const auto rebase = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
  };
  rebase(c.problem.dataset_path);
  rebase(c.output_directory);
  return c;
}

std::optional<GridChoice> select_grid_optimum(int lo, int hi, int start,
                                              const GridResponse& response) {
  if (lo > hi) throw std::invalid_argument("select_grid_optimum: empty window");
  std::map<int, std::optional<Step>> memo;
  const auto eval = [&](int i) {
    auto it = memo.find(i);
    if (it == memo.end()) it = memo.emplace(i, response(i)).first;
    return it->second;
  };
  const auto key = [&](int i) {
    const auto v = eval(i);
    return std::make_pair(v ? *v : std::numeric_limits<Step>::max(), i);
  };
  int current = std::clamp(start, lo, hi);
  while (true) {
    int best = current;
    for (int offset : {-2, -1, 1, 2}) {
      const int j = current + offset;
      if (j < lo || j > hi) continue;
      if (key(j) < key(best)) best = j;
    }
    if (!eval(best)) {
      for (int j = lo; j <= hi; ++j) {
        if (key(j) < key(best)) best = j;
      }
      if (!eval(best)) return std::nullopt;
    }
    if (best == current) break;
    current = best;
  }
  return GridChoice{current, *eval(current), memo.size()};
}

Step step_cap(double epochs, std::size_t n, std::size_t K, std::size_t b) {
  const double steps = std::ceil(epochs * static_cast<double>(n) / static_cast<double>(K * b));
  return std::max<Step>(1, static_cast<Step>(steps));
}

std::optional<Step> iterations_for(const Objective& objective, const CellSpec& cell,
                                   const StepSchedule& stepsize, double f_star, Step cap,
                                   std::uint64_t seed, Step eval_stride) {
  RunConfig cfg(cell.K, cap, cell.b, regular_sync_schedule(cap, cell.H), stepsize, seed);
  cfg.record.eval_stride = eval_stride;
  cfg.stop_at = AccuracyTarget{f_star, cell.epsilon};
  const RunTrace trace = run_local_sgd(cfg, objective);
  if (!trace.reached_target) return std::nullopt;
  return iterations_to_accuracy(trace, cell.epsilon, f_star);
}

std::optional<StepsizeChoice> grid_search_stepsize(const Objective& objective,
                                                   const CellSpec& cell,
                                                   const ExperimentConfig& config,
                                                   double f_star) {
  const std::size_t n = objective.components();
  const Step cap = step_cap(config.epochs_cap, n, cell.K, cell.b);
  std::optional<StepsizeChoice> best;
  for (StepFamily family : config.families) {
    const auto choice = select_grid_optimum(
        config.c_min_exponent, config.c_max_exponent, config.c_start_exponent, [&](int i) {
          return iterations_for(objective, cell, make_stepsize(family, std::ldexp(1.0, i), n),
                                f_star, cap, config.seed, config.eval_stride);
        });
    if (!choice) continue;
    const StepsizeChoice candidate{family, std::ldexp(1.0, choice->exponent), choice->exponent,
                                   choice->iterations};
    const auto rank = [](const StepsizeChoice& s) {
      return std::make_tuple(s.iterations, s.exponent, s.family == StepFamily::kDecay ? 0 : 1);
    };
    if (!best || rank(candidate) < rank(*best)) best = candidate;
  }
  return best;
}

ReferenceSolution compute_reference_fstar(const Objective& objective, double tolerance,
                                          int max_iterations) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("reference f*: tolerance must be > 0");
  const std::size_t d = objective.dimension();
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Vector x(d, 0.0);
  double fx = objective.value(x);
  for (int it = 0; it <= max_iterations; ++it) {
    const Vector g = objective.gradient(x);
    const double gnorm = std::sqrt(squared_norm(g));
    if (gnorm <= tolerance) {
      return ReferenceSolution{x, fx, Provenance::kNumeric, gnorm};
    }
    if (it == max_iterations) break;
    std::vector<double> h = objective.hessian(x);
    const Eigen::Map<const Mat> hess(h.data(), static_cast<Eigen::Index>(d),
                                     static_cast<Eigen::Index>(d));
    const Eigen::Map<const Eigen::VectorXd> grad(g.data(), static_cast<Eigen::Index>(d));
    const Eigen::VectorXd step = hess.ldlt().solve(-grad);
    const double slope = grad.dot(step);
    Vector trial(d);
    double t = 1.0;
    while (true) {
      for (std::size_t j = 0; j < d; ++j) trial[j] = x[j] + t * step[static_cast<Eigen::Index>(j)];
      const double ft = objective.value(trial);
      if (ft <= fx + 1e-4 * t * slope || t < 1e-12) {
        fx = ft;
        break;
      }
      t *= 0.5;
    }
    x = trial;
  }
  throw std::runtime_error("reference f*: Newton did not reach |grad f| <= " +
                           std::to_string(tolerance) + " within " +
                           std::to_string(max_iterations) + " iterations");
}

ReferenceSolution compute_reference_fstar(const Dataset& data, double lambda, double tolerance,
                                          int max_iterations) {
  if (!(lambda > 0.0)) throw std::invalid_argument("reference f*: lambda must be > 0");
  const LogisticObjective objective(std::make_shared<const Dataset>(data), lambda);
  return compute_reference_fstar(objective, tolerance, max_iterations);
}

namespace {

std::string number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

bool same_group(const CellSpec& a, const CellSpec& b) {
  return a.b == b.b && a.epsilon == b.epsilon;
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultsHeader << '\n';
  for (const ResultRow& r : rows) {
    out << r.cell.K << ',' << r.cell.H << ',' << r.cell.b << ',' << number(r.cell.epsilon) << ',';
    if (r.choice) {
      out << to_string(r.choice->family) << ',' << number(r.choice->c) << ','
          << r.choice->iterations << ',' << r.grad_evals << ',' << r.rounds << ','
          << number(r.wall_clock) << ',';
    } else {
      out << ",,,,,,";
    }
    if (r.speedup) out << number(*r.speedup);
    out << ',' << r.step_cap << ',' << (r.choice ? 1 : 0) << '\n';
  }
}

void write_theory_csv(std::ostream& out, const std::vector<std::size_t>& K,
                      const std::vector<Step>& H, const std::vector<double>& epsilons,
                      const CostModel& cost) {
  out << kTheoryHeader << '\n';
  for (double eps : epsilons) {
    for (std::size_t k : K) {
      for (Step h : H) {
        CostModel c = cost;
        c.epsilon = eps;
        out << k << ',' << h << ',' << number(eps) << ',' << number(cost.rho) << ','
            << number(speedup(k, h, c)) << '\n';
      }
    }
  }
}

void write_speedup_svg(std::ostream& out, const std::vector<ResultRow>& rows) {
  std::vector<CellSpec> groups;
  for (const ResultRow& r : rows) {
    if (std::none_of(groups.begin(), groups.end(),
                     [&](const CellSpec& g) { return same_group(g, r.cell); })) {
      groups.push_back(r.cell);
    }
  }
  const double width = 640, panel = 360, left = 60, right = 120, top = 40, bottom = 50;
  static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << panel * static_cast<double>(groups.size()) << "\" font-family=\"sans-serif\" "
      << "font-size=\"12\">\n";
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const CellSpec& g = groups[gi];
    std::vector<const ResultRow*> mine;
    double kmax = 1.0, smax = 1.0;
    for (const ResultRow& r : rows) {
      if (!same_group(r.cell, g)) continue;
      mine.push_back(&r);
      kmax = std::max(kmax, static_cast<double>(r.cell.K));
      if (r.speedup) smax = std::max(smax, *r.speedup);
    }
    const double y0 = panel * static_cast<double>(gi);
    const double plot_w = width - left - right, plot_h = panel - top - bottom;
    const double xspan = std::max(1.0, std::log2(kmax));
    const auto px = [&](double k) { return left + plot_w * std::log2(k) / xspan; };
    const auto py = [&](double s) { return y0 + top + plot_h * (1.0 - s / (smax * 1.05)); };
    out << "<text x=\"" << left << "\" y=\"" << y0 + 20 << "\">speedup vs K (b=" << g.b
        << ", epsilon=" << number(g.epsilon) << ")</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << y0 + top + plot_h << "\" x2=\""
        << left + plot_w << "\" y2=\"" << y0 + top + plot_h << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << y0 + top << "\" x2=\"" << left << "\" y2=\""
        << y0 + top + plot_h << "\" stroke=\"black\"/>\n";
    for (double k = 1.0; k <= kmax; k *= 2.0) {
      out << "<text x=\"" << px(k) << "\" y=\"" << y0 + top + plot_h + 18
          << "\" text-anchor=\"middle\">" << k << "</text>\n";
    }
    out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << y0 + panel - 8
        << "\" text-anchor=\"middle\">K (log2 scale)</text>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << py(smax) << "\" text-anchor=\"end\">"
        << number(std::round(smax * 100) / 100) << "</text>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << py(0) << "\" text-anchor=\"end\">0</text>\n";
    std::vector<Step> hs;
    for (const ResultRow* r : mine) {
      if (std::find(hs.begin(), hs.end(), r->cell.H) == hs.end()) hs.push_back(r->cell.H);
    }
    for (std::size_t hi = 0; hi < hs.size(); ++hi) {
      std::vector<std::pair<double, double>> pts;
      for (const ResultRow* r : mine) {
        if (r->cell.H == hs[hi] && r->speedup) {
          pts.emplace_back(static_cast<double>(r->cell.K), *r->speedup);
        }
      }
      std::sort(pts.begin(), pts.end());
      const char* color = kColors[hi % 8];
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
      for (const auto& [k, s] : pts) out << px(k) << ',' << py(s) << ' ';
      out << "\"/>\n";
      out << "<text x=\"" << width - right + 10 << "\" y=\"" << y0 + top + 16 * (hi + 1)
          << "\" fill=\"" << color << "\">H=" << hs[hi] << "</text>\n";
    }
  }
  out << "</svg>\n";
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const LoadedProblem problem = load_problem(config.problem);
  const Objective& objective = *problem.objective;

  ExperimentResult result;
  if (config.f_star) {
    result.f_star = *config.f_star;
  } else if (problem.known_solution) {
    result.f_star = problem.known_solution->f_star;
  } else {
    result.f_star = compute_reference_fstar(objective, config.fstar_tolerance).f_star;
  }

  std::vector<CellSpec> cells;
  for (std::size_t b : config.batches) {
    for (double eps : config.epsilons) {
      for (std::size_t K : config.workers) {
        for (Step H : config.local_steps) cells.push_back(CellSpec{K, H, b, eps});
      }
    }
  }
  std::vector<CellSpec> jobs = cells;
  for (std::size_t b : config.batches) {
    for (double eps : config.epsilons) {
      const CellSpec base{1, 1, b, eps};
      if (std::none_of(jobs.begin(), jobs.end(), [&](const CellSpec& c) {
            return c.K == 1 && c.H == 1 && same_group(c, base);
          })) {
        jobs.push_back(base);
      }
    }
  }

  std::vector<std::optional<StepsizeChoice>> choices(jobs.size());
  const std::size_t n = objective.components();
  parallel_for(jobs.size(), [&](std::size_t j) {
    const CellSpec& cell = jobs[j];
    choices[j] = grid_search_stepsize(objective, cell, config, result.f_star);
    if (choices[j]) {
      const auto again = iterations_for(
          objective, cell, make_stepsize(choices[j]->family, choices[j]->c, n), result.f_star,
          step_cap(config.epochs_cap, n, cell.K, cell.b), config.seed, config.eval_stride);
      if (again != choices[j]->iterations) {
        throw std::logic_error("grid search: re-run of the winning stepsize gave a different T*");
      }
    }
  });

  const auto wall = [&](const CellSpec& c, Step iterations) {
    return static_cast<double>(iterations) *
           (1.0 + config.cost.round_cost(c.K) / static_cast<double>(c.H));
  };
  const auto find_job = [&](const CellSpec& c) {
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].K == c.K && jobs[j].H == c.H && same_group(jobs[j], c)) return j;
    }
    throw std::logic_error("run_experiment: missing job");
  };

  for (const CellSpec& cell : cells) {
    ResultRow row;
    row.cell = cell;
    row.choice = choices[find_job(cell)];
    row.step_cap = step_cap(config.epochs_cap, n, cell.K, cell.b);
    if (row.choice) {
      const Step it = row.choice->iterations;
      row.grad_evals = it * static_cast<Step>(cell.K * cell.b);
      row.rounds = it / cell.H;
      row.wall_clock = wall(cell, it);
      const auto& base = choices[find_job(CellSpec{1, 1, cell.b, cell.epsilon})];
      if (cell.K == 1 && cell.H == 1) {
        row.speedup = 1.0;
      } else if (base && row.wall_clock > 0.0) {
        row.speedup = wall(CellSpec{1, 1, cell.b, cell.epsilon}, base->iterations) / row.wall_clock;
      }
    } else {
      result.any_unreachable = true;
    }
    result.rows.push_back(row);
  }

  const std::filesystem::path dir(config.output_directory);
  std::filesystem::create_directories(dir);
  const auto open = [&](const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("results.csv");
    write_results_csv(out, result.rows);
  }
  {
    auto out = open("speedup_theory.csv");
    write_theory_csv(out, config.workers, config.local_steps, config.epsilons, config.cost);
  }
  if (config.svg) {
    auto out = open("speedup.svg");
    write_speedup_svg(out, result.rows);
  }
  return result;
}

ExperimentResult run_experiment(const std::string& config_path) {
  return run_experiment(load_experiment_config(config_path));
}

LemmaSuiteConfig parse_lemma_config(std::istream& in) {
  ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("file", "line " + std::to_string(e.line()) + ": " + e.message());
  }
  LemmaSuiteConfig c;
  c.problem = parse_problem(tree);
  c.K = optional_scalar<std::size_t>(tree, "lemmas.K").value_or(c.K);
  c.H = optional_scalar<Step>(tree, "lemmas.H").value_or(c.H);
  c.T = optional_scalar<Step>(tree, "lemmas.T").value_or(c.T);
  c.b = optional_scalar<std::size_t>(tree, "lemmas.b").value_or(c.b);
  c.seed = optional_scalar<std::uint64_t>(tree, "lemmas.seed").value_or(c.seed);
  c.plan.runs = optional_scalar<std::size_t>(tree, "lemmas.runs").value_or(c.plan.runs);
  c.plan.held_out = optional_scalar<std::size_t>(tree, "lemmas.held_out").value_or(c.plan.held_out);
  c.trials = optional_scalar<std::size_t>(tree, "lemmas.trials").value_or(c.trials);
  c.tau = optional_scalar<Step>(tree, "lemmas.tau").value_or(c.tau);
  c.shift = optional_scalar<double>(tree, "lemmas.shift").value_or(c.shift);
  const std::string delay = trim(tree.get<std::string>("lemmas.delay", "fixed"));
  if (delay == "zero") {
    c.delay = DelayKind::kZero;
  } else if (delay == "fixed") {
    c.delay = DelayKind::kFixed;
  } else if (delay == "random") {
    c.delay = DelayKind::kRandomBounded;
  } else {
    throw ConfigError("lemmas.delay", "expected zero, fixed or random, got '" + delay + "'");
  }
  if (c.K < 1) throw ConfigError("lemmas.K", "must be >= 1");
  if (c.H < 1) throw ConfigError("lemmas.H", "must be >= 1");
  if (c.T < 1) throw ConfigError("lemmas.T", "must be >= 1");
  if (c.b < 1) throw ConfigError("lemmas.b", "must be >= 1");
  if (c.tau < 0) throw ConfigError("lemmas.tau", "must be >= 0");
  if (c.plan.runs < 2) throw ConfigError("lemmas.runs", "must be >= 2");
  if (c.plan.held_out < 1) throw ConfigError("lemmas.held_out", "must be >= 1");
  if (c.trials < 100) throw ConfigError("lemmas.trials", "must be >= 100");
  if (c.shift < 0.0) throw ConfigError("lemmas.shift", "must be >= 0");
  c.output_directory = trim(tree.get<std::string>("output.directory", ""));
  return c;
}

LemmaSuiteConfig load_lemma_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("file", "cannot open " + path);
  LemmaSuiteConfig c = parse_lemma_config(in);
  const auto base = std::filesystem::path(path).parent_path();
  for (std::string* p : {&c.problem.dataset_path, &c.output_directory}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
  }
  return c;
}

std::vector<CheckReport> run_lemma_suite(const LemmaSuiteConfig& config) {
  const LoadedProblem problem = load_problem(config.problem);
  const Objective& objective = *problem.objective;
  const ReferenceSolution solution =
      problem.known_solution ? *problem.known_solution : compute_reference_fstar(objective);
  const Vector origin(objective.dimension(), 0.0);
  const std::vector<Vector> anchors{origin, solution.x_star};
  const ProblemConstants constants = problem.known_constants
                                         ? *problem.known_constants
                                         : estimate_constants(objective, anchors);
  const double shift = config.shift > 0.0
                           ? config.shift
                           : std::max(16.0 * constants.kappa(),
                                      static_cast<double>(2 * config.H + config.tau));
  const SyncSchedule sync = regular_sync_schedule(config.T, config.H);
  RunConfig run(config.K, config.T, config.b, sync,
                StepSchedule::theorem_decay(constants.mu, shift), config.seed);

  std::vector<CheckReport> reports;

  // Fixed iterates for the variance check: the workers just before the last
  // synchronization of one held-out run.
  RunConfig probe = run;
  probe.seed = replicate_seed(config.seed, config.plan.runs + config.plan.held_out);
  probe.record.worker_iterates = true;
  probe.record.function_values = false;
  const RunTrace probe_trace = run_local_sgd(probe, objective);
  Step t_probe = std::max<Step>(0, config.T - 1);
  while (t_probe > 0 && sync.contains(t_probe) && config.H > 1) --t_probe;
  const auto& states = probe_trace.worker_iterates[static_cast<std::size_t>(t_probe)];
  reports.push_back(check_variance_reduction(objective, states, config.trials, config.seed,
                                             config.b));

  reports.push_back(check_deviation_bound(run, objective, constants, config.plan));
  reports.push_back(check_perturbed_inequality(run, objective, constants, solution, config.plan));

  const TrajectoryMoments moments = trajectory_moments(objective, std::span(&probe_trace, 1));
  const double h = static_cast<double>(config.H);
  RecursionParams rp;
  rp.shift = shift;
  rp.mu = constants.mu;
  rp.A = 0.5;
  rp.B = moments.sigma2 / static_cast<double>(config.K * config.b);
  rp.C = 8.0 * moments.G2 * h * h * constants.L;
  rp.T = config.T;
  const double r0 = squared_distance(origin, solution.x_star);
  CheckReport eq = check_recursion_lemma(rp, equality_recursion(r0, 0.5));
  eq.lemma = "recursion_equality";
  reports.push_back(eq);
  CheckReport slack = check_recursion_lemma(rp, slack_recursion(r0, 0.5, 0.5, config.seed));
  slack.lemma = "recursion_slack";
  reports.push_back(slack);

  DelayModel delay;
  delay.kind = config.delay;
  delay.tau = config.delay == DelayKind::kZero ? 0 : config.tau;
  delay.seed = config.seed;
  const std::vector<SyncSchedule> schedules(config.K, sync);
  reports.push_back(
      check_async_deviation(run, schedules, delay, objective, constants, config.plan));

  if (!config.output_directory.empty()) {
    std::filesystem::create_directories(config.output_directory);
    std::ofstream out(std::filesystem::path(config.output_directory) / "lemma_checks.csv",
                      std::ios::binary);
    if (!out) throw std::runtime_error("cannot write lemma_checks.csv");
    write_reports_csv(out, reports);
  }
  return reports;
}

}  // namespace localsgd
