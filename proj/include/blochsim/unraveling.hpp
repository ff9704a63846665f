#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "blochsim/master_equation.hpp"
#include "blochsim/propagator.hpp"
#include "blochsim/su_algebra.hpp"

namespace blochsim {

// Ensemble configuration for the random-unitary unraveling.  Trajectory i
// draws from GaussianStream(master_seed, i); see rng.hpp for the exact
// derivation.  Results are independent of thread count and scheduling.
struct NoiseConfig {
    std::uint64_t master_seed = 1;
    int trajectories = 1;
    double dt = 1e-3;
    int channels = 1;
};

struct EnsembleResult {
    Trajectory trajectory;  // mean Bloch vector with per-component standard errors
    int trajectories = 0;
};

enum class Execution { serial, parallel };

// Brownian increments (each ~ Normal(0, dt)) for one trajectory, as a
// steps x channels matrix.  Draws are ordered channel-major within a step;
// the ensemble drivers consume streams in exactly this order.
Eigen::MatrixXd sample_increments(const NoiseConfig& config, int steps,
                                  std::uint64_t trajectory_index);

// One step of the random unitary U = exp(-i H dt - i sum_k L_k dB_k),
// applied to a state vector or a density matrix.
Eigen::VectorXcd trajectory_step(const Eigen::VectorXcd& state, const Eigen::MatrixXcd& h,
                                 const std::vector<Eigen::MatrixXcd>& lindblads,
                                 const Eigen::VectorXd& db, double dt);
Eigen::MatrixXcd trajectory_step(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& h,
                                 const std::vector<Eigen::MatrixXcd>& lindblads,
                                 const Eigen::VectorXd& db, double dt);

// Matrix-level ensemble: rho(t) = E[U_t rho(0) U_t^dag], encoded to Bloch
// coordinates on the output grid.  grid spacings must be multiples of
// config.dt.  Picture::heisenberg rotates the unitary motion out of the
// recorded points.
EnsembleResult ensemble_bloch(const MatrixProblem& problem, const GeneratorBasis& basis,
                              const NoiseConfig& config, const std::vector<double>& grid,
                              Picture picture = Picture::heisenberg,
                              Execution exec = Execution::parallel);

// Matrix-free estimator of the same expectation: per step the exact
// orthogonal map exp(Adj(gamma(t) l^H(t)) dB) applied to r.
EnsembleResult bloch_space_unraveling(const EvolutionProblem& problem,
                                      const NoiseConfig& config,
                                      const std::vector<double>& grid,
                                      Execution exec = Execution::parallel);

}  // namespace blochsim
