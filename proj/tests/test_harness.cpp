#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "localsgd/harness.hpp"
#include "support.hpp"

using namespace localsgd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("localsgd_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string field_of(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_experiment_config(in).validate();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

const char* kSmallQuadratic = R"([problem]
kind = quadratic
d = 5
mu = 1
L = 2
n = 20
noise = 0.5
seed = 3

[sweep]
epsilon = 0.01
K = 1, 2, 4
H = 1, 4
b = 1
families = decay, constant
c_min = -12
c_max = 6
c_start = -4
epochs_cap = 100
eval_stride = 1

[cost]
rho = 25
)";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LOCALSGD_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("experiment config parsing") {
  std::istringstream in(kSmallQuadratic);
  const ExperimentConfig c = parse_experiment_config(in);
  CHECK(c.problem.quadratic);
  CHECK(c.problem.quadratic->dimension == 5);
  CHECK(c.workers == std::vector<std::size_t>{1, 2, 4});
  CHECK(c.local_steps == std::vector<Step>{1, 4});
  CHECK(c.epsilons == std::vector<double>{0.01});
  CHECK(c.cost.rho == 25.0);
  CHECK(c.c_start_exponent == -4);
  CHECK_NOTHROW(c.validate());

  CHECK(field_of("[problem]\nkind = quadratic\n[sweep]\nK = 1\nH = 1\nb = 1\n") == "sweep.epsilon");
  CHECK(field_of("[problem]\nkind = quadratic\n[sweep]\nepsilon = 0\nK = 1\nH = 1\nb = 1\n") ==
        "sweep.epsilon");
  CHECK(field_of("[problem]\nkind = quadratic\n[sweep]\nepsilon = 0.1\nK = 1, x\nH = 1\nb = 1\n") ==
        "sweep.K");
  CHECK(field_of("[problem]\nkind = cubic\n[sweep]\nepsilon = 0.1\nK = 1\nH = 1\nb = 1\n") ==
        "problem.kind");
  CHECK(field_of("[problem]\nkind = quadratic\n[sweep]\nepsilon = 0.1\nK = 1\nH = 0\nb = 1\n") ==
        "sweep.H");
  CHECK(field_of("[problem]\nkind = quadratic\n[sweep]\nepsilon = 0.1\nK = 1\nH = 1\nb = 1\n"
                 "[cost]\nrho = 0.5\n") == "cost.rho");
  CHECK(field_of("[problem]\nkind = quadratic\n[sweep]\nepsilon = 0.1\nK = 1\nH = 1\nb = 1\n"
                 "families = decay, sometimes\n") == "sweep.families");
  CHECK(field_of("[sweep]\nepsilon = 0.1\nK = 1\nH = 1\nb = 1\n").rfind("problem", 0) == 0);
  CHECK(field_of("[problem\nkind = quadratic\n") == "file");
}

TEST_CASE("relative dataset paths resolve against the config file") {
  const fs::path dir = scratch("relative");
  fs::copy_file(fixtures::data_path("logistic50.svm"), dir / "data.svm");
  {
    std::ofstream out(dir / "run.ini");
    out << "[problem]\ndataset = data.svm\n[sweep]\nepsilon = 0.1\nK = 1\nH = 1\nb = 1\n";
  }
  const ExperimentConfig c = load_experiment_config((dir / "run.ini").string());
  CHECK(fs::equivalent(c.problem.dataset_path, dir / "data.svm"));
  const LoadedProblem p = load_problem(c.problem);
  CHECK(p.objective->components() == 50);
  CHECK_THROWS_AS(load_experiment_config((dir / "missing.ini").string()), ConfigError);
}

TEST_CASE("grid optimum matches an exhaustive scan") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> where(-15, 15);
  std::uniform_real_distribution<double> curvature(0.0, 40.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = where(rng);
    const double alpha = curvature(rng);
    const double beta = curvature(rng);
    const int diverge = m + 2 + trial % 6;
    const GridResponse response = [&](int i) -> std::optional<Step> {
      if (i >= diverge) return std::nullopt;
      const double x = static_cast<double>(i - m);
      return static_cast<Step>(std::floor(alpha * x * x + beta * std::abs(x))) + 100;
    };
    std::optional<std::pair<Step, int>> best;
    for (int i = -20; i <= 20; ++i) {
      if (const auto v = response(i); v && (!best || std::make_pair(*v, i) < *best)) {
        best = std::make_pair(*v, i);
      }
    }
    const auto choice = select_grid_optimum(-20, 20, trial % 11 - 5, response);
    REQUIRE(choice);
    CHECK(choice->exponent == best->second);
    CHECK(choice->iterations == best->first);
  }
}

TEST_CASE("grid search corner cases") {
  const GridResponse far = [](int i) -> std::optional<Step> {
    if (i < 10 || i > 12) return std::nullopt;
    return 50 - i;
  };
  const auto found = select_grid_optimum(-20, 20, 0, far);
  REQUIRE(found);
  CHECK(found->exponent == 12);
  CHECK_FALSE(select_grid_optimum(-3, 3, 0, [](int) { return std::optional<Step>{}; }));
  const auto flat = select_grid_optimum(-6, 6, 2, [](int) { return std::optional<Step>{7}; });
  CHECK(flat->exponent == -6);
  CHECK_THROWS(select_grid_optimum(1, 0, 0, far));
}

TEST_CASE("a target at or above the initial gap is reached immediately") {
  const QuadraticProblem q = fixtures::quadratic10();
  ExperimentConfig config;
  config.c_min_exponent = -8;
  config.c_max_exponent = 4;
  const double gap = q.objective->value(Vector(10, 0.0)) - q.solution.f_star;
  const CellSpec cell{2, 3, 1, gap * 1.01};
  const auto choice = grid_search_stepsize(*q.objective, cell, config, q.solution.f_star);
  REQUIRE(choice);
  CHECK(choice->iterations == 0);
  CHECK(choice->exponent == -8);
  CHECK(choice->family == StepFamily::kDecay);
}

TEST_CASE("constant stepsize lands within one notch of the best fixed step") {
  // Without noise the iteration is gradient descent; its contraction
  // max|1 − η λ| over the spectrum [μ, L] is smallest at η = 2/(μ + L).
  QuadraticSpec spec;
  spec.dimension = 10;
  spec.mu = 1.0;
  spec.L = 4.0;
  spec.components = 30;
  spec.noise = 0.0;
  ProblemSpec problem;
  problem.quadratic = spec;
  const LoadedProblem p = load_problem(problem);
  ExperimentConfig config;
  config.families = {StepFamily::kConstant};
  config.c_min_exponent = -14;
  config.c_max_exponent = 2;
  config.c_start_exponent = -10;
  config.eval_stride = 1;
  const auto choice = grid_search_stepsize(*p.objective, CellSpec{1, 1, 1, 1e-8}, config,
                                           p.known_solution->f_star);
  REQUIRE(choice);
  const double eta = 32.0 * choice->c;
  const double best = 2.0 / (1.0 + 4.0);
  CHECK(eta >= best / 2.0);
  CHECK(eta <= best * 2.0);
}

TEST_CASE("reference solution of a one-dimensional quadratic") {
  const QuadraticProblem q = make_quadratic(1, 2.0, 2.0, 8, 0.5, 4);
  const ReferenceSolution r = compute_reference_fstar(*q.objective, 1e-12);
  CHECK(std::abs(r.x_star[0] - q.solution.x_star[0]) <= 1e-12);
  CHECK(std::abs(r.f_star - q.solution.f_star) <= 1e-12);
  CHECK(std::sqrt(squared_norm(q.objective->gradient(r.x_star))) <= 1e-12);

  const auto f = fixtures::logistic50();
  const ReferenceSolution lr = compute_reference_fstar(*f, 1e-10);
  CHECK(std::sqrt(squared_norm(f->gradient(lr.x_star))) <= 1e-10);
  CHECK(lr.f_star < f->value(Vector(f->dimension(), 0.0)));
}

TEST_CASE("step cap") {
  CHECK(step_cap(200.0, 100, 4, 1) == 5000);
  CHECK(step_cap(200.0, 101, 3, 2) == 3367);
  CHECK(step_cap(1e-9, 10, 8, 8) == 1);
}

TEST_CASE("experiment output") {
  const fs::path dir = scratch("experiment");
  std::istringstream in(kSmallQuadratic);
  ExperimentConfig config = parse_experiment_config(in);
  config.output_directory = dir.string();
  config.svg = true;
  const ExperimentResult result = run_experiment(config);
  CHECK_FALSE(result.any_unreachable);
  REQUIRE(result.rows.size() == 6);

  for (const ResultRow& row : result.rows) {
    REQUIRE(row.choice);
    const auto it = static_cast<double>(row.choice->iterations);
    CHECK(row.grad_evals == row.choice->iterations * static_cast<Step>(row.cell.K));
    CHECK(row.rounds == row.choice->iterations / row.cell.H);
    CHECK(row.wall_clock ==
          it * (1.0 + 50.0 * static_cast<double>(row.cell.K - 1) / static_cast<double>(row.cell.H)));
    if (row.cell.K == 1 && row.cell.H == 1) CHECK(*row.speedup == 1.0);
  }

  const auto rows = read_csv(dir / "results.csv");
  REQUIRE(rows.size() == 7);
  std::ostringstream header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header << (i ? "," : "") << rows[0][i];
  CHECK(header.str() == kResultsHeader);
  CHECK(rows[1][10] == "1");

  const auto theory = read_csv(dir / "speedup_theory.csv");
  REQUIRE(theory.size() == 7);
  for (std::size_t r = 1; r < theory.size(); ++r) {
    const double K = std::stod(theory[r][0]);
    const double H = std::stod(theory[r][1]);
    const double eps = std::stod(theory[r][2]);
    const double rho = std::stod(theory[r][3]);
    CHECK(std::abs(std::stod(theory[r][4]) - speedup(K, H, eps, rho)) <= 1e-12);
  }
  const std::string svg = read_file(dir / "speedup.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("theory table at rho 25 and eps 0") {
  std::ostringstream out;
  write_theory_csv(out, {1, 2, 8, 64}, {1, 4, 16}, {0.0}, CostModel{25.0, 0.0});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == kTheoryHeader);
  std::size_t count = 0;
  while (std::getline(in, line)) {
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    CHECK(std::abs(v[4] - v[0] / (1.0 + 50.0 * (v[0] - 1.0) / v[1])) <= 1e-12);
    ++count;
  }
  CHECK(count == 12);
}

TEST_CASE("command line exit codes and determinism") {
  const fs::path dir = scratch("cli");
  const auto write_config = [&](const std::string& name, const std::string& body,
                                const std::string& output) {
    std::ofstream out(dir / name);
    out << body << "\n[output]\ndirectory = " << output << "\n";
  };
  write_config("good.ini", kSmallQuadratic, "first");
  CHECK(run_cli("run " + (dir / "good.ini").string()) == 0);
  write_config("good.ini", kSmallQuadratic, "second");
  CHECK(run_cli("run " + (dir / "good.ini").string()) == 0);
  CHECK(read_file(dir / "first" / "results.csv") == read_file(dir / "second" / "results.csv"));

  std::string tight = kSmallQuadratic;
  tight.replace(tight.find("epochs_cap = 100"), 16, "epochs_cap = 0.05");
  write_config("tight.ini", tight, "tight");
  CHECK(run_cli("run " + (dir / "tight.ini").string()) == 2);
  CHECK(fs::exists(dir / "tight" / "results.csv"));

  write_config("bad.ini", "[problem]\nkind = quadratic\n[sweep]\nK = 1\nH = 1\nb = 1\n", "bad");
  CHECK(run_cli("run " + (dir / "bad.ini").string()) == 1);
  CHECK(run_cli("run " + (dir / "absent.ini").string()) == 1);
  CHECK(run_cli("theory --K 1,2 --H 1,4 --eps 0 --rho 25") == 0);
  CHECK(run_cli("theory --rho 0.5") == 1);
  CHECK(run_cli("fstar " + fixtures::data_path("logistic50.svm")) == 0);
  CHECK(run_cli("fstar " + fixtures::data_path("zero_index.svm")) == 1);
}
