#include "blochsim/master_equation.hpp"

#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>

namespace blochsim {

namespace {

using namespace std::complex_literals;

double hermiticity_residual(const Eigen::MatrixXcd& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Eigen::MatrixXcd& rho) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace

MatrixProblem::MatrixProblem(Eigen::MatrixXcd h, std::vector<Eigen::MatrixXcd> ls,
                             std::vector<GammaProfile> gs, Eigen::MatrixXcd rho0_)
    : hamiltonian(std::move(h)), lindblads(std::move(ls)), gammas(std::move(gs)),
      rho0(std::move(rho0_)) {
    const auto n = rho0.rows();
    if (rho0.cols() != n || hamiltonian.rows() != n || hamiltonian.cols() != n)
        throw std::invalid_argument("MatrixProblem: dimension mismatch");
    for (const auto& l : lindblads)
        if (l.rows() != n || l.cols() != n)
            throw std::invalid_argument("MatrixProblem: Lindblad dimension mismatch");
    if (gammas.size() != lindblads.size())
        throw std::invalid_argument("MatrixProblem: one gamma profile per Lindblad required");
    if (hermiticity_residual(hamiltonian) > 1e-10)
        throw std::invalid_argument("MatrixProblem: Hamiltonian not Hermitian");
    if (std::abs(rho0.trace() - std::complex<double>(1.0)) > 1e-10)
        throw std::invalid_argument("MatrixProblem: Tr rho0 != 1");
    if (hermiticity_residual(rho0) > 1e-10)
        throw std::invalid_argument("MatrixProblem: rho0 not Hermitian");
    if (min_eigenvalue(rho0) < -1e-10)
        throw std::invalid_argument("MatrixProblem: rho0 not positive semidefinite");
}

bool MatrixProblem::lindblads_hermitian(double tol) const {
    for (const auto& l : lindblads)
        if (hermiticity_residual(l) > tol) return false;
    return true;
}

Eigen::MatrixXcd rhs_general(const Eigen::MatrixXcd& rho, const MatrixProblem& problem,
                             double t) {
    Eigen::MatrixXcd out = -1i * (problem.hamiltonian * rho - rho * problem.hamiltonian);
    for (std::size_t k = 0; k < problem.lindblads.size(); ++k) {
        const double g = problem.gammas[k](t);
        if (g == 0.0) continue;
        const auto& l = problem.lindblads[k];
        const Eigen::MatrixXcd ldag = l.adjoint();
        const Eigen::MatrixXcd lrho = l * rho;
        const Eigen::MatrixXcd rhold = rho * ldag;
        out += (0.5 * g * g) * (lrho * ldag - ldag * lrho + l * rhold - rhold * l);
    }
    return out;
}

Eigen::MatrixXcd rhs_hermitian(const Eigen::MatrixXcd& rho, const MatrixProblem& problem,
                               double t) {
    Eigen::MatrixXcd out = -1i * (problem.hamiltonian * rho - rho * problem.hamiltonian);
    for (std::size_t k = 0; k < problem.lindblads.size(); ++k) {
        const double g = problem.gammas[k](t);
        if (g == 0.0) continue;
        const auto& l = problem.lindblads[k];
        if (hermiticity_residual(l) > 1e-10)
            throw std::invalid_argument("rhs_hermitian: non-Hermitian Lindblad operator");
        const Eigen::MatrixXcd inner = l * rho - rho * l;
        out -= (0.5 * g * g) * (l * inner - inner * l);
    }
    return out;
}

namespace {

double default_matrix_step(const MatrixProblem& problem, double min_interval) {
    // commutator with H moves coherences at up to twice its spectral norm
    const double omega = 2.0 * problem.hamiltonian.jacobiSvd().singularValues()(0);
    double diss = 0.0;
    for (std::size_t k = 0; k < problem.lindblads.size(); ++k) {
        const double g = problem.gammas[k].sup();
        const double ln = problem.lindblads[k].jacobiSvd().singularValues()(0);
        diss += 2.0 * g * g * ln * ln;
    }
    const double rate = std::max(omega, diss);
    double dt = rate > 0.0 ? 0.01 / rate : min_interval;
    return std::min(dt, min_interval);
}

}  // namespace

MatrixTrajectory integrate(const MatrixProblem& problem, const std::vector<double>& grid,
                           const IntegrateOptions& options) {
    if (grid.empty()) throw std::invalid_argument("integrate: empty grid");
    if (std::abs(grid.front()) > 1e-15)
        throw std::invalid_argument("integrate: grid must start at 0");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1])
            throw std::invalid_argument("integrate: grid must be strictly increasing");
    if (options.form == RhsForm::hermitian && !problem.lindblads_hermitian())
        throw std::invalid_argument(
            "integrate: hermitian form requested with non-Hermitian Lindblad operators");

    double min_interval = grid.size() > 1 ? grid[1] - grid[0] : 1.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        min_interval = std::min(min_interval, grid[i] - grid[i - 1]);
    const double dt =
        options.dt > 0.0 ? options.dt : default_matrix_step(problem, min_interval);

    auto rhs = [&](const Eigen::MatrixXcd& rho, double t) {
        return options.form == RhsForm::hermitian ? rhs_hermitian(rho, problem, t)
                                                  : rhs_general(rho, problem, t);
    };

    MatrixTrajectory result;
    result.dt = dt;
    result.times = grid;
    result.rho.reserve(grid.size());
    result.rho.push_back(problem.rho0);
    result.stats.min_eigenvalue = min_eigenvalue(problem.rho0);

    auto check_point = [&](const Eigen::MatrixXcd& rho, double t) {
        const double trace_err = std::abs(rho.trace() - std::complex<double>(1.0));
        const double herm_err = hermiticity_residual(rho);
        result.stats.max_trace_error = std::max(result.stats.max_trace_error, trace_err);
        result.stats.max_hermiticity_error =
            std::max(result.stats.max_hermiticity_error, herm_err);
        if (trace_err > 1e-8) {
            std::ostringstream msg;
            msg << "integrate: trace drifted by " << trace_err << " at t = " << t;
            throw std::runtime_error(msg.str());
        }
    };

    Eigen::MatrixXcd rho = problem.rho0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double t0 = grid[i - 1];
        const double span = grid[i] - t0;
        const int substeps = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
        const double h = span / substeps;
        double t = t0;
        for (int s = 0; s < substeps; ++s) {
            const Eigen::MatrixXcd k1 = rhs(rho, t);
            const Eigen::MatrixXcd k2 = rhs(rho + (h / 2.0) * k1, t + h / 2.0);
            const Eigen::MatrixXcd k3 = rhs(rho + (h / 2.0) * k2, t + h / 2.0);
            const Eigen::MatrixXcd k4 = rhs(rho + h * k3, t + h);
            rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
            check_point(rho, t);
        }
        // spectral positivity check at output points only
        const double min_eig = min_eigenvalue(rho);
        result.stats.min_eigenvalue = std::min(result.stats.min_eigenvalue, min_eig);
        if (min_eig < -1e-6) {
            std::ostringstream msg;
            msg << "integrate: density matrix lost positivity (eigenvalue " << min_eig
                << ") at t = " << grid[i];
            throw std::runtime_error(msg.str());
        }
        result.rho.push_back(rho);
    }
    return result;
}

MatrixTrajectory to_heisenberg(const MatrixTrajectory& trajectory,
                               const Eigen::MatrixXcd& hamiltonian) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hamiltonian);
    const Eigen::MatrixXcd v = es.eigenvectors();
    const Eigen::VectorXd eigs = es.eigenvalues();

    MatrixTrajectory out = trajectory;
    for (std::size_t i = 0; i < trajectory.times.size(); ++i) {
        const double t = trajectory.times[i];
        Eigen::VectorXcd phases(eigs.size());
        for (Eigen::Index j = 0; j < eigs.size(); ++j)
            phases(j) = std::exp(1i * eigs(j) * t);
        const Eigen::MatrixXcd u = v * phases.asDiagonal() * v.adjoint();
        out.rho[i] = u * trajectory.rho[i] * u.adjoint();
    }
    return out;
}

}  // namespace blochsim
