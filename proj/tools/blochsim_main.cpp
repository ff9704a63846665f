#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "blochsim/scenario.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bloch-vector dynamics for Lindblad systems with Hermitian operators"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir = ".";
    std::string method;
    std::uint64_t seed = 0;
    double dt = 0.0;
    int order = -1;
    int trajectories = 0;

    auto* run = app.add_subcommand("run", "evaluate a scenario file");
    run->add_option("scenario", scenario_path, "scenario file")->required();
    auto* method_opt = run->add_option(
        "--method", method, "formula | series | perturbation | mc | oracle | compare");
    run->add_option("--out", out_dir, "output directory (default: current)");
    auto* seed_opt = run->add_option("--seed", seed, "Monte Carlo master seed");
    auto* dt_opt = run->add_option("--dt", dt, "time step override");
    auto* order_opt = run->add_option("--order", order, "series/perturbation order");
    auto* traj_opt = run->add_option("--trajectories", trajectories, "Monte Carlo ensemble size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const blochsim::Scenario scenario =
            blochsim::parse_scenario(read_file(scenario_path));

        blochsim::RunOverrides overrides;
        if (*method_opt) overrides.method = method;
        if (*seed_opt) overrides.seed = seed;
        if (*dt_opt) {
            if (dt <= 0.0) {
                std::fprintf(stderr, "--dt must be positive\n");
                return 1;
            }
            overrides.dt = dt;
        }
        if (*order_opt) {
            if (order < 0) {
                std::fprintf(stderr, "--order must be >= 0\n");
                return 1;
            }
            overrides.order = order;
        }
        if (*traj_opt) {
            if (trajectories < 1) {
                std::fprintf(stderr, "--trajectories must be >= 1\n");
                return 1;
            }
            overrides.trajectories = trajectories;
        }

        return blochsim::run_scenario(scenario, out_dir, overrides);
    } catch (const blochsim::ScenarioError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
