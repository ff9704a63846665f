#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blochsim/master_equation.hpp"
#include "blochsim/propagator.hpp"

namespace blochsim {

// Line-oriented scenario files: `key = value` pairs, sections in square
// brackets, lists as repeated sections.  See scenarios/ for examples.

struct ParseIssue {
    int line = 0;  // 1-based; 0 for cross-field issues
    std::string message;
};

class ScenarioError : public std::runtime_error {
  public:
    explicit ScenarioError(std::vector<ParseIssue> issues);
    const std::vector<ParseIssue>& issues() const { return issues_; }

  private:
    static std::string render(const std::vector<ParseIssue>& issues);
    std::vector<ParseIssue> issues_;
};

enum class Convention { trace2, custom_f };

struct OperatorSpec {
    bool is_matrix = false;
    Eigen::MatrixXcd matrix;  // N x N
    Eigen::VectorXd bloch;    // N^2-1
};

struct LindbladSpec {
    OperatorSpec op;
    GammaProfile gamma = GammaProfile::constant(1.0);
};

struct Scenario {
    std::string name;
    int dimension = 0;
    Convention convention = Convention::trace2;
    Picture picture = Picture::heisenberg;
    std::string method = "formula";
    double t_final = 0.0;
    double dt = 0.0;
    int output_stride = 1;

    std::vector<std::array<int, 3>> f_indices;  // 0-based
    std::vector<double> f_values;

    std::optional<OperatorSpec> hamiltonian;
    std::vector<LindbladSpec> lindblads;

    std::optional<Eigen::VectorXd> r0;
    std::optional<Eigen::MatrixXcd> rho0;

    int mc_trajectories = 1000;
    std::uint64_t mc_seed = 1;

    int series_order = 8;
    int series_nodes = 32;
    int perturbation_order = 2;

    std::vector<std::string> compare_methods;
    double compare_tolerance = 1e-6;
    double compare_se_mult = 3.0;

    int bloch_dim() const { return dimension * dimension - 1; }
};

// Throws ScenarioError carrying every validation problem found.
Scenario parse_scenario(const std::string& text);
std::string serialize_scenario(const Scenario& scenario);

// Realizations of the scenario for the different evaluation paths.
StructureTensor scenario_tensor(const Scenario& scenario);
EvolutionProblem build_evolution_problem(const Scenario& scenario);
MatrixProblem build_matrix_problem(const Scenario& scenario);
std::vector<double> scenario_grid(const Scenario& scenario);

struct RunOverrides {
    std::optional<std::string> method;
    std::optional<std::uint64_t> seed;
    std::optional<double> dt;
    std::optional<int> order;
    std::optional<int> trajectories;
};

// Dispatches one method (formula | series | perturbation | mc | oracle |
// compare), writes <name>.<method>.csv and <name>.meta under out_dir, plus
// <name>.compare.csv / <name>.compare.txt for compare.  Returns the process
// exit code (0 ok/PASS, 2 numerical failure or FAIL).
int run_scenario(const Scenario& scenario, const std::string& out_dir,
                 const RunOverrides& overrides = {});

struct CompareThresholds {
    double abs_tol = 1e-6;  // deterministic-vs-deterministic sup-norm
    double se_mult = 3.0;   // Monte-Carlo deviations in standard-error units
};

struct PairReport {
    std::string first, second;
    double global_sup = 0.0;     // sup over time/components of |a-b|
    double max_se_mult = 0.0;    // only meaningful if stochastic
    bool stochastic = false;     // at least one side carries standard errors
    bool pass = false;
};

struct CompareReport {
    std::vector<double> times;
    std::vector<std::vector<double>> per_time;  // per pair, per time: max-abs deviation
    std::vector<PairReport> pairs;
    bool pass = false;
    std::string text;
};

// Requires >= 2 trajectories on identical grids.
CompareReport compare_report(const std::vector<Trajectory>& trajectories,
                             const std::vector<std::string>& labels,
                             const CompareThresholds& thresholds = {});

}  // namespace blochsim
