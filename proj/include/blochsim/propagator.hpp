#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "blochsim/su_algebra.hpp"

namespace blochsim {

// Time-dependent coupling strength gamma(t); enters the master equation as
// gamma^2(t)/2 times the double commutator, so gamma itself carries units of
// rate^{1/2}.
class GammaProfile {
  public:
    enum class Kind { constant, exponential_decay, tabulated };

    static GammaProfile constant(double g0);
    static GammaProfile exponential_decay(double g0, double tau);
    static GammaProfile tabulated(std::vector<double> times, std::vector<double> values);

    double operator()(double t) const;
    double sup() const;  // sup_t gamma(t)
    Kind kind() const { return kind_; }
    bool is_constant() const { return kind_ == Kind::constant; }
    double constant_value() const;
    double g0() const { return g0_; }
    double tau() const { return tau_; }
    const std::vector<double>& table_times() const { return times_; }
    const std::vector<double>& table_values() const { return values_; }

  private:
    GammaProfile() = default;
    Kind kind_ = Kind::constant;
    double g0_ = 1.0;
    double tau_ = 1.0;
    std::vector<double> times_, values_;
};

struct Channel {
    Eigen::VectorXd l;    // Bloch part of the Lindblad operator
    GammaProfile gamma = GammaProfile::constant(1.0);
};

enum class Picture { heisenberg, schroedinger };

// A Bloch-space evolution problem: Hamiltonian coefficients h, dissipative
// channels, initial Bloch vector, all over one set of structure constants.
struct EvolutionProblem {
    StructureTensor f;
    Eigen::VectorXd h;
    std::vector<Channel> channels;
    Eigen::VectorXd r0;
    Picture picture = Picture::heisenberg;

    EvolutionProblem(StructureTensor f_, Eigen::VectorXd h_, std::vector<Channel> channels_,
                     Eigen::VectorXd r0_, Picture picture_ = Picture::heisenberg);
};

struct TrajectoryMeta {
    std::string method;
    double dt = 0.0;
    int order = -1;
    double tail_bound = std::numeric_limits<double>::quiet_NaN();
    double step_halving_diff = std::numeric_limits<double>::quiet_NaN();
    bool accuracy_warning = false;
    std::uint64_t seed = 0;
    int trajectories = 0;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> bloch;
    std::vector<Eigen::VectorXd> stderrs;  // populated by Monte Carlo paths only
    TrajectoryMeta meta;
};

// l^H(t) = exp(t * adjoint(h)) l, the Bloch image of e^{iHt} L e^{-iHt}.
Eigen::VectorXd heisenberg_transform(const Eigen::VectorXd& l, const Eigen::VectorXd& h,
                                     double t, const StructureTensor& f);

struct EvolveOptions {
    double dt = 0.0;                 // 0: pick from the problem scales
    bool check_step_halving = true;  // rerun at dt/2 and record the difference
};

// The time-ordered boxdot-exponential, evaluated as the solution of
// dr/dt = 1/2 sum_k gamma_k^2(t) * Adj(l_k^H(t))^2 * r with classic RK4.
// grid must start at 0.
Trajectory evolve_formula(const EvolutionProblem& problem, const std::vector<double>& grid,
                          const EvolveOptions& options = {});

struct DysonOptions {
    int nodes = 32;  // Gauss-Legendre nodes per nesting level
};

// Truncated time-ordered exponential series with nested Gauss-Legendre
// quadrature.  On return tail_bound (if given) holds
// ||r0|| * sum_{m>order} (K t)^m / m! with K = 1/2 sup_t ||B(t)||_2.
Eigen::VectorXd dyson_series(const EvolutionProblem& problem, double t, int order,
                             const DysonOptions& options = {},
                             double* tail_bound = nullptr);

// Power series in the channel strength gamma (exponent gamma/2 l^H(t) boxdot),
// given explicitly by the expansion up to second order.  The problem must
// hold a single channel with unit-norm l and unit constant profile; gamma is
// the expansion parameter.
Eigen::VectorXd perturbation_series(const EvolutionProblem& problem, double t, int order,
                                    double gamma, const DysonOptions& options = {});

// Single matrix exponential exp(sum_k gamma_k^2 t/2 B_k) r0, valid when every
// channel commutes with the Hamiltonian (h (.) l_k = 0) and gamma is constant.
Eigen::VectorXd commuting_closed_form(const EvolutionProblem& problem, double t);

// Closed second-order qubit formulas for H = w0 sigma_z, L = sqrt(gamma) sigma_x
// in the f = eps/2 convention; exact in the z component.
Eigen::Vector3d qubit_second_order(const Eigen::Vector3d& r0, double w0, double gamma,
                                   double t);

// First-order squared Bloch norm 1 - (gamma t/2)(1 - sinc 2 w0 t) for
// r0 = (1,0,0); valid for gamma*t << 1.
double purity_first_order(double w0, double gamma, double t);

// Generator matrix G(t) = 1/2 sum_k gamma_k^2(t) Adj(l_k^H(t))^2 (shared by the
// ODE, series and closed-form paths).
Eigen::MatrixXd bloch_generator(const EvolutionProblem& problem, double t);

inline double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

}  // namespace blochsim
