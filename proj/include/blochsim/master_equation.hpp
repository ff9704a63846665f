#pragma once

#include <Eigen/Dense>
#include <vector>

#include "blochsim/propagator.hpp"

namespace blochsim {

// Density-matrix form of the evolution problem; the reference path that the
// Bloch-space formula and the Monte Carlo estimators are validated against.
struct MatrixProblem {
    Eigen::MatrixXcd hamiltonian;
    std::vector<Eigen::MatrixXcd> lindblads;
    std::vector<GammaProfile> gammas;  // one per Lindblad operator
    Eigen::MatrixXcd rho0;

    MatrixProblem(Eigen::MatrixXcd h, std::vector<Eigen::MatrixXcd> ls,
                  std::vector<GammaProfile> gs, Eigen::MatrixXcd rho0_);

    int dim() const { return static_cast<int>(rho0.rows()); }
    bool lindblads_hermitian(double tol = 1e-10) const;
};

// drho/dt = -i[H,rho] + 1/2 sum_k g_k^2(t) ([L_k rho, L_k^dag] + [L_k, rho L_k^dag])
Eigen::MatrixXcd rhs_general(const Eigen::MatrixXcd& rho, const MatrixProblem& problem,
                             double t);

// drho/dt = -i[H,rho] - 1/2 sum_k g_k^2(t) [L_k, [L_k, rho]]; requires
// Hermitian Lindblad operators.
Eigen::MatrixXcd rhs_hermitian(const Eigen::MatrixXcd& rho, const MatrixProblem& problem,
                               double t);

enum class RhsForm { hermitian, general };

struct IntegrateOptions {
    double dt = 0.0;  // 0: pick from the problem scales
    RhsForm form = RhsForm::hermitian;
};

struct IntegrationStats {
    double max_trace_error = 0.0;
    double max_hermiticity_error = 0.0;
    double min_eigenvalue = 1.0;
};

struct MatrixTrajectory {
    std::vector<double> times;
    std::vector<Eigen::MatrixXcd> rho;
    IntegrationStats stats;
    double dt = 0.0;
};

// Classic RK4 with per-step trace/Hermiticity monitoring and spectral
// positivity checks at the output points.  Throws if |Tr rho - 1| > 1e-8 or
// the smallest eigenvalue drops below -1e-6.
MatrixTrajectory integrate(const MatrixProblem& problem, const std::vector<double>& grid,
                           const IntegrateOptions& options = {});

// rho^H(t) = e^{iHt} rho(t) e^{-iHt}
MatrixTrajectory to_heisenberg(const MatrixTrajectory& trajectory,
                               const Eigen::MatrixXcd& hamiltonian);

}  // namespace blochsim
