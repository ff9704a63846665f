#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "blochsim/propagator.hpp"
#include "blochsim/rng.hpp"
#include "blochsim/su_algebra.hpp"
#include "blochsim/unraveling.hpp"

using namespace blochsim;
using Complex = std::complex<double>;
using namespace std::complex_literals;

namespace {

Eigen::MatrixXcd pauli(int k) {
    Eigen::MatrixXcd m(2, 2);
    switch (k) {
        case 0: m << 0, 1, 1, 0; break;
        case 1: m << 0, Complex(0, -1), Complex(0, 1), 0; break;
        default: m << 1, 0, 0, -1; break;
    }
    return m;
}

std::vector<double> uniform_grid(double t_final, int points) {
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i) grid[i] = t_final * i / (points - 1);
    return grid;
}

StructureTensor su2_half_epsilon() {
    return StructureTensor::from_entries(3, {{0, 1, 2}}, {0.5});
}

}  // namespace

TEST_CASE("increment streams are deterministic per (seed, index)") {
    NoiseConfig config;
    config.master_seed = 99;
    config.dt = 0.01;
    config.channels = 2;
    const auto a = sample_increments(config, 50, 7);
    const auto b = sample_increments(config, 50, 7);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    const auto c = sample_increments(config, 50, 8);
    CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("increment variance matches dt") {
    NoiseConfig config;
    config.master_seed = 1234;
    config.dt = 0.02;
    config.channels = 1;
    const int steps = 100000;
    const auto db = sample_increments(config, steps, 0);
    const double mean = db.col(0).mean();
    const double var = (db.col(0).array() - mean).square().sum() / (steps - 1);
    CHECK(var > config.dt * 0.98);
    CHECK(var < config.dt * 1.02);
    CHECK(std::abs(mean) < 4.0 * std::sqrt(config.dt / steps));
}

TEST_CASE("streams with different indices are uncorrelated") {
    NoiseConfig config;
    config.master_seed = 777;
    config.dt = 1.0;  // unit variance draws
    config.channels = 1;
    const int steps = 10000;
    const auto a = sample_increments(config, steps, 0);
    const auto b = sample_increments(config, steps, 1);
    const double corr = (a.col(0).array() * b.col(0).array()).mean();
    CHECK(std::abs(corr) < 0.01);
}

TEST_CASE("trajectory_step: identity without Hamiltonian and noise") {
    Eigen::VectorXcd psi(2);
    psi << 1, 0;
    const auto out = trajectory_step(psi, Eigen::MatrixXcd::Zero(2, 2), {pauli(2)},
                                     Eigen::VectorXd::Zero(1), 0.01);
    CHECK((out - psi).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("trajectory_step: sigma_z noise applies opposite phases") {
    Eigen::VectorXcd plus(2);
    plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    const double b = 0.37;
    Eigen::VectorXd db(1);
    db << b;
    const auto out = trajectory_step(plus, Eigen::MatrixXcd::Zero(2, 2), {pauli(2)}, db, 0.0);
    CHECK(std::abs(out(0) - std::exp(-1i * b) * plus(0)) < 1e-14);
    CHECK(std::abs(out(1) - std::exp(1i * b) * plus(1)) < 1e-14);
}

TEST_CASE("trajectory_step rejects unnormalized states") {
    Eigen::VectorXcd bad(2);
    bad << 2.0, 0.0;
    CHECK_THROWS_AS(trajectory_step(bad, Eigen::MatrixXcd::Zero(2, 2), {},
                                    Eigen::VectorXd::Zero(0), 0.1),
                    std::invalid_argument);
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Identity(2, 2);
    CHECK_THROWS_AS(
        trajectory_step(rho, Eigen::MatrixXcd::Zero(2, 2), {}, Eigen::VectorXd::Zero(0), 0.1),
        std::invalid_argument);
}

TEST_CASE("free precession advances the Bloch vector at angular rate 2 w0") {
    const double w0 = 0.8, dt = 0.01;
    const auto basis = build_generators(2);
    Eigen::VectorXcd psi(2);
    psi << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);  // r = (1,0,0)
    const Eigen::MatrixXcd h = w0 * pauli(2);
    for (int s = 1; s <= 200; ++s) {
        psi = trajectory_step(psi, h, {}, Eigen::VectorXd::Zero(0), dt);
        const double t = s * dt;
        const Eigen::MatrixXcd rho = psi * psi.adjoint();
        const Eigen::VectorXd r = bloch_encode(rho, basis);
        CHECK(r(0) == doctest::Approx(std::cos(2.0 * w0 * t)).epsilon(1e-12));
        CHECK(r(1) == doctest::Approx(std::sin(2.0 * w0 * t)).epsilon(1e-12));
    }
}

TEST_CASE("state norm drift stays below 1e-10 over 1e4 steps") {
    GaussianStream stream(55, 0);
    Eigen::VectorXcd psi(2);
    psi << 0.6, Complex(0.0, 0.8);
    const Eigen::MatrixXcd h = 0.9 * pauli(2) + 0.4 * pauli(0);
    const std::vector<Eigen::MatrixXcd> ls = {0.7 * pauli(0)};
    Eigen::VectorXd db(1);
    for (int s = 0; s < 10000; ++s) {
        db(0) = 0.03 * stream.normal();
        psi = trajectory_step(psi, h, ls, db, 1e-3);
    }
    CHECK(std::abs(psi.norm() - 1.0) < 1e-10);
}

TEST_CASE("single-step average reproduces the double-commutator generator") {
    // E[U rho U^dag] = rho - (dt/2)[L,[L,rho]] + O(dt^2) with L = sigma_z:
    // the 01 coherence picks up the exact factor e^{-2 dt}
    const double dt = 0.01;
    Eigen::MatrixXcd rho(2, 2);
    rho << 0.5, Complex(0.3, -0.2), Complex(0.3, 0.2), 0.5;
    GaussianStream stream(56, 0);
    Eigen::MatrixXcd mean = Eigen::MatrixXcd::Zero(2, 2);
    const int draws = 200000;
    Eigen::VectorXd db(1);
    for (int i = 0; i < draws; ++i) {
        db(0) = std::sqrt(dt) * stream.normal();
        mean += trajectory_step(rho, Eigen::MatrixXcd::Zero(2, 2), {pauli(2)}, db, dt);
    }
    mean /= draws;
    const double exact = std::exp(-2.0 * dt);
    CHECK(mean(0, 1).real() == doctest::Approx(0.3 * exact).epsilon(0.01));
    const Eigen::MatrixXcd first_order =
        rho - (dt / 2.0) * (pauli(2) * (pauli(2) * rho - rho * pauli(2)) -
                            (pauli(2) * rho - rho * pauli(2)) * pauli(2));
    CHECK(std::abs(first_order(0, 1).real() - 0.3 * exact) < 3e-4);  // O(dt^2)
}

TEST_CASE("noise-free matrix ensemble equals unitary evolution with zero variance") {
    const auto basis = build_generators(2);
    Eigen::VectorXd r0(3);
    r0 << 0.6, 0.0, 0.4;
    MatrixProblem problem(1.1 * pauli(2), {}, {}, bloch_decode(r0, basis));
    NoiseConfig config;
    config.master_seed = 5;
    config.trajectories = 8;
    config.dt = 1e-2;
    config.channels = 0;
    const auto grid = uniform_grid(1.0, 11);

    // Heisenberg picture freezes the motion entirely
    const auto result = ensemble_bloch(problem, basis, config, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK((result.trajectory.bloch[i] - r0).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(result.trajectory.stderrs[i].maxCoeff() < 1e-7);
    }

    // Schroedinger picture shows the rotation
    const auto rotating =
        ensemble_bloch(problem, basis, config, grid, Picture::schroedinger);
    bool moved = false;
    for (std::size_t i = 1; i < grid.size(); ++i)
        moved = moved ||
                (rotating.trajectory.bloch[i] - r0).cwiseAbs().maxCoeff() > 0.1;
    CHECK(moved);
}

TEST_CASE("maximally mixed initial state stays exactly fixed") {
    const auto basis = build_generators(2);
    MatrixProblem problem(pauli(2), {0.5 * pauli(0)}, {GammaProfile::constant(1.0)},
                          0.5 * Eigen::MatrixXcd::Identity(2, 2));
    NoiseConfig config;
    config.master_seed = 6;
    config.trajectories = 16;
    config.dt = 1e-2;
    config.channels = 1;
    const auto result = ensemble_bloch(problem, basis, config, uniform_grid(0.5, 6));
    for (const auto& r : result.trajectory.bloch) CHECK(r.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("matrix ensemble reproduces the dephasing decay within 3 SE") {
    // s = 2 convention: L = sqrt(g) sigma_z damps coherences as e^{-2 g t}
    const auto basis = build_generators(2);
    const double g = 0.25;  // L = 0.5 sigma_z
    Eigen::VectorXd r0(3);
    r0 << 1.0, 0.0, 0.0;
    MatrixProblem problem(1.0 * pauli(2), {0.5 * pauli(2)}, {GammaProfile::constant(1.0)},
                          bloch_decode(r0, basis));
    NoiseConfig config;
    config.master_seed = 20240809;
    config.trajectories = 10000;
    config.dt = 1e-2;
    config.channels = 1;
    const auto grid = uniform_grid(1.0, 11);
    const auto result = ensemble_bloch(problem, basis, config, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double expected = std::exp(-2.0 * g * grid[i]);
        const double dev = std::abs(result.trajectory.bloch[i](0) - expected);
        const double se = std::max(result.trajectory.stderrs[i](0), 1e-12);
        CHECK(dev <= 3.0 * se + 1e-9);
        // z starts and stays at zero for every trajectory
        CHECK(std::abs(result.trajectory.bloch[i](2)) < 1e-12);
    }
}

TEST_CASE("serial and parallel ensembles are bitwise identical") {
    const auto basis = build_generators(2);
    Eigen::VectorXd r0(3);
    r0 << 0.8, 0.1, 0.2;
    MatrixProblem problem(0.7 * pauli(2), {0.4 * pauli(0)}, {GammaProfile::constant(1.0)},
                          bloch_decode(r0, basis));
    NoiseConfig config;
    config.master_seed = 31337;
    config.trajectories = 600;
    config.dt = 5e-3;
    config.channels = 1;
    const auto grid = uniform_grid(0.5, 6);
    const auto serial = ensemble_bloch(problem, basis, config, grid, Picture::heisenberg,
                                       Execution::serial);
    const auto parallel = ensemble_bloch(problem, basis, config, grid, Picture::heisenberg,
                                         Execution::parallel);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK((serial.trajectory.bloch[i] - parallel.trajectory.bloch[i])
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
        CHECK((serial.trajectory.stderrs[i] - parallel.trajectory.stderrs[i])
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("bloch-space unraveling: noiseless channel is deterministic") {
    Eigen::VectorXd h(3), l(3), r0(3);
    h << 0, 0, 1.0;
    l.setZero();
    r0 << 1.0, 0, 0;
    EvolutionProblem problem(su2_half_epsilon(), h, {{l, GammaProfile::constant(1.0)}}, r0,
                             Picture::schroedinger);
    NoiseConfig config;
    config.master_seed = 8;
    config.trajectories = 4;
    config.dt = 1e-2;
    config.channels = 1;
    const auto grid = uniform_grid(1.0, 11);
    const auto result = bloch_space_unraveling(problem, config, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid[i];
        CHECK(result.trajectory.bloch[i](0) == doctest::Approx(std::cos(t)).epsilon(1e-10));
        CHECK(result.trajectory.bloch[i](1) == doctest::Approx(std::sin(t)).epsilon(1e-10));
        CHECK(result.trajectory.stderrs[i].maxCoeff() < 1e-12);
    }
}

TEST_CASE("bloch-space unraveling reproduces the dephasing closed form within 3 SE") {
    Eigen::VectorXd h(3), l(3), r0(3);
    const double gamma = 1.0;
    h << 0, 0, 1.0;
    l << 0, 0, std::sqrt(gamma);
    r0 << 0.9, -0.3, 0.5;
    EvolutionProblem problem(su2_half_epsilon(), h, {{l, GammaProfile::constant(1.0)}}, r0);
    NoiseConfig config;
    config.master_seed = 424242;
    config.trajectories = 10000;
    config.dt = 1e-2;
    config.channels = 1;
    const auto grid = uniform_grid(1.0, 11);
    const auto result = bloch_space_unraveling(problem, config, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double decay = std::exp(-gamma * grid[i] / 2.0);
        for (int c = 0; c < 2; ++c) {
            const double expected = decay * r0(c);
            const double se = std::max(result.trajectory.stderrs[i](c), 1e-12);
            CHECK(std::abs(result.trajectory.bloch[i](c) - expected) <= 3.0 * se + 1e-9);
        }
        CHECK(result.trajectory.bloch[i](2) == doctest::Approx(r0(2)).epsilon(1e-12));
    }
}

TEST_CASE("bloch-space steps preserve the trajectory norm exactly") {
    Eigen::VectorXd h(3), l(3), r0(3);
    h << 0.2, -0.4, 1.0;
    l << std::sqrt(0.5), 0, 0;
    r0 << 0.6, 0.0, 0.8;
    EvolutionProblem problem(su2_half_epsilon(), h, {{l, GammaProfile::constant(1.0)}}, r0);
    NoiseConfig config;
    config.master_seed = 9;
    config.trajectories = 1;  // the mean is the single trajectory
    config.dt = 1e-3;
    config.channels = 1;
    const auto result = bloch_space_unraveling(problem, config, uniform_grid(2.0, 21));
    for (const auto& r : result.trajectory.bloch)
        CHECK(r.norm() == doctest::Approx(r0.norm()).epsilon(1e-11));
}

TEST_CASE("matrix and Bloch-space estimators agree within combined errors") {
    // same physical problem in the s = 2 convention
    const auto basis = build_generators(2);
    const auto tensor = StructureTensor::from_basis(basis);
    const double w0 = 0.9, g = 0.4;
    Eigen::VectorXd h(3), l(3), r0(3);
    h << 0, 0, w0;
    l << g, 0, 0;
    r0 << 0.7, 0.2, 0.6;

    EvolutionProblem bloch_problem(StructureTensor(tensor), h,
                                   {{l, GammaProfile::constant(1.0)}}, r0);
    MatrixProblem matrix_problem(w0 * pauli(2), {g * pauli(0)},
                                 {GammaProfile::constant(1.0)}, bloch_decode(r0, basis));

    NoiseConfig config;
    config.master_seed = 260809;
    config.trajectories = 4000;
    config.dt = 5e-3;
    config.channels = 1;
    const auto grid = uniform_grid(1.0, 6);

    const auto via_matrix = ensemble_bloch(matrix_problem, basis, config, grid);
    config.master_seed = 260810;  // independent ensemble
    const auto via_bloch = bloch_space_unraveling(bloch_problem, config, grid);

    for (std::size_t i = 0; i < grid.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            const double dev =
                std::abs(via_matrix.trajectory.bloch[i](c) - via_bloch.trajectory.bloch[i](c));
            const double se = std::hypot(via_matrix.trajectory.stderrs[i](c),
                                         via_bloch.trajectory.stderrs[i](c));
            CHECK(dev <= 3.0 * std::max(se, 1e-6) + 2e-3);  // + O(dt) bias headroom
        }
}

TEST_CASE("standard errors scale like 1/sqrt(M)") {
    const auto basis = build_generators(2);
    Eigen::VectorXd r0(3);
    r0 << 1.0, 0.0, 0.0;
    MatrixProblem problem(pauli(2), {0.5 * pauli(2)}, {GammaProfile::constant(1.0)},
                          bloch_decode(r0, basis));
    const auto grid = uniform_grid(0.5, 2);

    auto run = [&](int m, std::uint64_t seed) {
        NoiseConfig config;
        config.master_seed = seed;
        config.trajectories = m;
        config.dt = 1e-2;
        config.channels = 1;
        return ensemble_bloch(problem, basis, config, grid);
    };
    const auto small = run(100, 71);
    const auto medium = run(1000, 72);
    const auto large = run(10000, 73);
    const double s0 = small.trajectory.stderrs.back()(0) * std::sqrt(100.0);
    const double s1 = medium.trajectory.stderrs.back()(0) * std::sqrt(1000.0);
    const double s2 = large.trajectory.stderrs.back()(0) * std::sqrt(10000.0);
    // normalized spreads agree once SE is rescaled by sqrt(M)
    CHECK(std::abs(s1 / s0 - 1.0) < 0.3);
    CHECK(std::abs(s2 / s1 - 1.0) < 0.15);

    // ensemble error against the closed form shrinks roughly like 1/sqrt(M)
    const double exact = std::exp(-2.0 * 0.25 * 0.5);
    const double err_small = std::abs(small.trajectory.bloch.back()(0) - exact);
    const double err_large = std::abs(large.trajectory.bloch.back()(0) - exact);
    CHECK(err_large < err_small);
}

TEST_CASE("weak bias shrinks at least linearly in dt") {
    // coupled refinement: coarse increments are sums of the fine ones,
    // so the statistical part cancels in mean differences
    const Eigen::MatrixXcd h = 1.0 * pauli(2);
    const std::vector<Eigen::MatrixXcd> ls = {0.8 * pauli(0)};
    const auto basis = build_generators(2);
    Eigen::VectorXd r0(3);
    r0 << 0.0, 0.0, 1.0;
    const Eigen::MatrixXcd rho0 = bloch_decode(r0, basis);

    const double t_final = 1.0;
    const double dt_fine = 0.0125;
    const int fine_steps = static_cast<int>(t_final / dt_fine + 0.5);
    const int m = 800;

    NoiseConfig config;
    config.master_seed = 90001;
    config.dt = dt_fine;
    config.channels = 1;

    auto mean_at_level = [&](int coarsen) {
        const double dt = dt_fine * coarsen;
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
        for (int i = 0; i < m; ++i) {
            const auto fine = sample_increments(config, fine_steps, i);
            Eigen::MatrixXcd rho = rho0;
            for (int s = 0; s < fine_steps; s += coarsen) {
                double db = 0.0;
                for (int k = 0; k < coarsen; ++k) db += fine(s + k, 0);
                Eigen::VectorXd step(1);
                step << db;
                rho = trajectory_step(rho, h, ls, step, dt);
            }
            mean += bloch_encode(rho, basis);
        }
        return Eigen::VectorXd(mean / m);
    };

    const auto level0 = mean_at_level(1);
    const auto level1 = mean_at_level(2);
    const auto level2 = mean_at_level(4);
    const double diff10 = (level1 - level0).norm();  // ~ bias(2 dt) - bias(dt)
    const double diff21 = (level2 - level1).norm();  // ~ bias(4 dt) - bias(2 dt)
    CHECK(diff21 > 1.2 * diff10);  // halving dt at least roughly halves the bias
    CHECK(diff21 < 8.0 * diff10);
}
