// Timing comparison of the serial reference paths against the OpenMP
// kernels: Monte Carlo ensembles (matrix-level and Bloch-level) and the
// per-grid-point Dyson series evaluation.

#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#else
#include <chrono>
#endif

#include "blochsim/master_equation.hpp"
#include "blochsim/propagator.hpp"
#include "blochsim/su_algebra.hpp"
#include "blochsim/unraveling.hpp"

using namespace blochsim;

namespace {

double now() {
#ifdef _OPENMP
    return omp_get_wtime();
#else
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
#endif
}

EvolutionProblem qubit_problem() {
    auto tensor = StructureTensor::from_basis(build_generators(2));
    Eigen::VectorXd h(3), l(3), r0(3);
    h << 0, 0, 1.0;
    l << 1.0, 0, 0;
    r0 << 1.0, 0, 0;
    return EvolutionProblem(std::move(tensor), h, {{l, GammaProfile::constant(0.3)}}, r0);
}

MatrixProblem qubit_matrix_problem() {
    const auto basis = build_generators(2);
    Eigen::MatrixXcd h = basis.matrices[2];           // sigma_z
    Eigen::MatrixXcd l = basis.matrices[0] * 0.3;     // 0.3 sigma_x
    Eigen::VectorXd r0(3);
    r0 << 1.0, 0, 0;
    return MatrixProblem(h, {l}, {GammaProfile::constant(1.0)}, bloch_decode(r0, basis));
}

template <typename Fn>
double time_best_of(int repeats, Fn&& fn) {
    double best = 1e300;
    for (int i = 0; i < repeats; ++i) {
        const double t0 = now();
        fn();
        best = std::min(best, now() - t0);
    }
    return best;
}

void report(const char* label, double serial, double parallel) {
    std::printf("%-28s serial %8.3f s   parallel %8.3f s   speedup %.2fx\n", label, serial,
                parallel, serial / parallel);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns run serially\n");
#endif

    std::vector<double> grid;
    for (int i = 0; i <= 50; ++i) grid.push_back(i * 0.02);

    NoiseConfig config;
    config.master_seed = 2024;
    config.trajectories = 4000;
    config.dt = 1e-3;
    config.channels = 1;

    {
        const auto problem = qubit_matrix_problem();
        const auto basis = build_generators(2);
        const double serial = time_best_of(2, [&] {
            ensemble_bloch(problem, basis, config, grid, Picture::heisenberg,
                           Execution::serial);
        });
        const double parallel = time_best_of(2, [&] {
            ensemble_bloch(problem, basis, config, grid, Picture::heisenberg,
                           Execution::parallel);
        });
        report("ensemble_bloch (matrix)", serial, parallel);
    }

    {
        const auto problem = qubit_problem();
        const double serial = time_best_of(
            2, [&] { bloch_space_unraveling(problem, config, grid, Execution::serial); });
        const double parallel = time_best_of(
            2, [&] { bloch_space_unraveling(problem, config, grid, Execution::parallel); });
        report("bloch_space_unraveling", serial, parallel);
    }

    {
        const auto problem = qubit_problem();
        const int order = 10;
        std::vector<Eigen::VectorXd> out(grid.size(), problem.r0);
        const double serial = time_best_of(2, [&] {
            for (std::size_t i = 1; i < grid.size(); ++i)
                out[i] = dyson_series(problem, grid[i], order);
        });
        const double parallel = time_best_of(2, [&] {
            const int n = static_cast<int>(grid.size());
#pragma omp parallel for schedule(dynamic)
            for (int i = 1; i < n; ++i) out[i] = dyson_series(problem, grid[i], order);
        });
        report("dyson_series over grid", serial, parallel);
    }

    return 0;
}
