#include "blochsim/unraveling.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "blochsim/matexp.hpp"
#include "blochsim/rng.hpp"

namespace blochsim {

using namespace std::complex_literals;

namespace {

// trajectories per accumulation block; partial sums are reduced in block
// order so the result does not depend on the thread schedule
constexpr int kBlock = 64;

struct GridLayout {
    std::vector<int> substeps;  // per output interval
    int total_steps = 0;
};

GridLayout layout_grid(const std::vector<double>& grid, double dt) {
    if (grid.empty()) throw std::invalid_argument("ensemble: empty grid");
    if (std::abs(grid.front()) > 1e-15)
        throw std::invalid_argument("ensemble: grid must start at 0");
    if (dt <= 0.0) throw std::invalid_argument("ensemble: dt must be positive");
    GridLayout layout;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double span = grid[i] - grid[i - 1];
        if (span <= 0.0) throw std::invalid_argument("ensemble: grid must be increasing");
        const double ratio = span / dt;
        const int n = static_cast<int>(std::lround(ratio));
        if (n < 1 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio))
            throw std::invalid_argument(
                "ensemble: grid spacing must be a multiple of dt");
        layout.substeps.push_back(n);
        layout.total_steps += n;
    }
    return layout;
}

// Deterministic blocked mean/stderr accumulator.
class BlockAccumulator {
  public:
    BlockAccumulator(int blocks, int rows, int cols)
        : sums_(blocks, Eigen::MatrixXd::Zero(rows, cols)),
          sq_sums_(blocks, Eigen::MatrixXd::Zero(rows, cols)) {}

    void add(int block, const Eigen::MatrixXd& sample) {
        sums_[block] += sample;
        sq_sums_[block] += sample.cwiseProduct(sample);
    }

    // folds blocks in index order
    void finalize(int count, Eigen::MatrixXd& mean, Eigen::MatrixXd& stderr_out) const {
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(sums_[0].rows(), sums_[0].cols());
        Eigen::MatrixXd sq = sum;
        for (std::size_t b = 0; b < sums_.size(); ++b) {
            sum += sums_[b];
            sq += sq_sums_[b];
        }
        mean = sum / count;
        if (count > 1) {
            const Eigen::MatrixXd var =
                ((sq - count * mean.cwiseProduct(mean)) / (count - 1)).cwiseMax(0.0);
            stderr_out = (var / count).cwiseSqrt();
        } else {
            stderr_out = Eigen::MatrixXd::Constant(
                mean.rows(), mean.cols(), std::numeric_limits<double>::infinity());
        }
    }

  private:
    std::vector<Eigen::MatrixXd> sums_;
    std::vector<Eigen::MatrixXd> sq_sums_;
};

template <typename TrajectoryFn>
EnsembleResult run_ensemble(const NoiseConfig& config, const std::vector<double>& grid,
                            int dim, Execution exec, TrajectoryFn&& simulate) {
    if (config.trajectories < 1)
        throw std::invalid_argument("ensemble: need at least one trajectory");
    const int m = config.trajectories;
    const int n_out = static_cast<int>(grid.size());
    const int blocks = (m + kBlock - 1) / kBlock;

    BlockAccumulator acc(blocks, n_out, dim);

    auto run_block = [&](int b) {
        Eigen::MatrixXd sample(n_out, dim);
        const int begin = b * kBlock;
        const int end = std::min(m, begin + kBlock);
        for (int i = begin; i < end; ++i) {
            simulate(static_cast<std::uint64_t>(i), sample);
            acc.add(b, sample);
        }
    };

    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int b = 0; b < blocks; ++b) run_block(b);
    } else {
        for (int b = 0; b < blocks; ++b) run_block(b);
    }

    Eigen::MatrixXd mean, se;
    acc.finalize(m, mean, se);

    EnsembleResult result;
    result.trajectories = m;
    result.trajectory.times = grid;
    result.trajectory.bloch.reserve(n_out);
    result.trajectory.stderrs.reserve(n_out);
    for (int i = 0; i < n_out; ++i) {
        result.trajectory.bloch.push_back(mean.row(i).transpose());
        result.trajectory.stderrs.push_back(se.row(i).transpose());
    }
    result.trajectory.meta.dt = config.dt;
    result.trajectory.meta.seed = config.master_seed;
    result.trajectory.meta.trajectories = m;
    return result;
}

}  // namespace

Eigen::MatrixXd sample_increments(const NoiseConfig& config, int steps,
                                  std::uint64_t trajectory_index) {
    if (steps < 0 || config.channels < 1 || config.dt <= 0.0)
        throw std::invalid_argument("sample_increments: bad shape");
    GaussianStream stream(config.master_seed, trajectory_index);
    const double sigma = std::sqrt(config.dt);
    Eigen::MatrixXd db(steps, config.channels);
    for (int s = 0; s < steps; ++s)
        for (int k = 0; k < config.channels; ++k) db(s, k) = sigma * stream.normal();
    return db;
}

Eigen::VectorXcd trajectory_step(const Eigen::VectorXcd& state, const Eigen::MatrixXcd& h,
                                 const std::vector<Eigen::MatrixXcd>& lindblads,
                                 const Eigen::VectorXd& db, double dt) {
    if (std::abs(state.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("trajectory_step: state vector not normalized");
    Eigen::MatrixXcd k = dt * h;
    for (std::size_t i = 0; i < lindblads.size(); ++i) k += db(i) * lindblads[i];
    return unitary_exp(k) * state;
}

Eigen::MatrixXcd trajectory_step(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& h,
                                 const std::vector<Eigen::MatrixXcd>& lindblads,
                                 const Eigen::VectorXd& db, double dt) {
    if (std::abs(rho.trace() - std::complex<double>(1.0)) > 1e-6)
        throw std::invalid_argument("trajectory_step: density matrix trace != 1");
    Eigen::MatrixXcd k = dt * h;
    for (std::size_t i = 0; i < lindblads.size(); ++i) k += db(i) * lindblads[i];
    const Eigen::MatrixXcd u = unitary_exp(k);
    return u * rho * u.adjoint();
}

EnsembleResult ensemble_bloch(const MatrixProblem& problem, const GeneratorBasis& basis,
                              const NoiseConfig& config, const std::vector<double>& grid,
                              Picture picture, Execution exec) {
    const GridLayout layout = layout_grid(grid, config.dt);
    const int n = problem.dim();
    const int dim = basis.bloch_dim();
    const int n_channels = static_cast<int>(problem.lindblads.size());
    const double sigma = std::sqrt(config.dt);
    const double encode_factor = basis.dim / basis.scale;

    // e^{iHt} at the output points, for rotating into the Heisenberg picture
    std::vector<Eigen::MatrixXcd> heis_rot;
    if (picture == Picture::heisenberg) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(problem.hamiltonian);
        heis_rot.reserve(grid.size());
        for (double t : grid) {
            Eigen::VectorXcd phases(n);
            for (int j = 0; j < n; ++j)
                phases(j) = std::exp(1i * es.eigenvalues()(j) * t);
            heis_rot.push_back(es.eigenvectors() * phases.asDiagonal() *
                               es.eigenvectors().adjoint());
        }
    }

    auto encode_row = [&](const Eigen::MatrixXcd& rho, Eigen::MatrixXd& sample, int row) {
        for (int k = 0; k < dim; ++k)
            sample(row, k) = encode_factor * (rho * basis.matrices[k]).trace().real();
    };

    auto simulate = [&](std::uint64_t index, Eigen::MatrixXd& sample) {
        GaussianStream stream(config.master_seed, index);
        Eigen::MatrixXcd rho = problem.rho0;
        Eigen::MatrixXcd k_op(n, n), u(n, n), tmp(n, n);
        Eigen::VectorXd db(n_channels);
        double t = 0.0;

        encode_row(rho, sample, 0);

        for (std::size_t seg = 0; seg + 1 < grid.size(); ++seg) {
            for (int s = 0; s < layout.substeps[seg]; ++s) {
                for (int c = 0; c < n_channels; ++c)
                    db(c) = sigma * stream.normal() * problem.gammas[c](t);
                k_op = config.dt * problem.hamiltonian;
                for (int c = 0; c < n_channels; ++c) k_op += db(c) * problem.lindblads[c];
                unitary_exp_inplace(k_op, u);
                tmp.noalias() = u * rho;
                rho.noalias() = tmp * u.adjoint();
                t += config.dt;
            }
            if (picture == Picture::heisenberg) {
                tmp.noalias() = heis_rot[seg + 1] * rho;
                const Eigen::MatrixXcd rho_h = tmp * heis_rot[seg + 1].adjoint();
                encode_row(rho_h, sample, static_cast<int>(seg) + 1);
            } else {
                encode_row(rho, sample, static_cast<int>(seg) + 1);
            }
        }
    };

    EnsembleResult result = run_ensemble(config, grid, dim, exec, simulate);
    result.trajectory.meta.method = "mc-matrix";
    return result;
}

EnsembleResult bloch_space_unraveling(const EvolutionProblem& problem,
                                      const NoiseConfig& config,
                                      const std::vector<double>& grid, Execution exec) {
    const GridLayout layout = layout_grid(grid, config.dt);
    const int dim = problem.f.dim();
    const int n_channels = static_cast<int>(problem.channels.size());
    const double sigma = std::sqrt(config.dt);

    const Eigen::MatrixXd adj_h = adjoint_matrix(problem.h, problem.f);
    const Eigen::MatrixXd e_step = expm(Eigen::MatrixXd(config.dt * adj_h));

    // l^H and the Schroedinger rotation at output points are trajectory
    // independent; precompute per step / per point
    std::vector<std::vector<Eigen::MatrixXd>> adj_l(layout.total_steps);
    std::vector<std::vector<double>> adj_theta(layout.total_steps);  // rotation rate, dim 3
    std::vector<double> step_time(layout.total_steps);
    {
        std::vector<Eigen::VectorXd> l_heis(n_channels);
        for (int c = 0; c < n_channels; ++c) l_heis[c] = problem.channels[c].l;
        double t = 0.0;
        for (int s = 0; s < layout.total_steps; ++s) {
            step_time[s] = t;
            adj_l[s].reserve(n_channels);
            adj_theta[s].reserve(n_channels);
            for (int c = 0; c < n_channels; ++c) {
                adj_l[s].push_back(adjoint_matrix(l_heis[c], problem.f));
                const auto& a = adj_l[s].back();
                adj_theta[s].push_back(
                    dim == 3 ? std::sqrt(a(2, 1) * a(2, 1) + a(0, 2) * a(0, 2) +
                                         a(1, 0) * a(1, 0))
                             : 0.0);
            }
            for (int c = 0; c < n_channels; ++c) l_heis[c] = e_step * l_heis[c];
            t += config.dt;
        }
    }
    std::vector<Eigen::MatrixXd> schro_rot;
    if (problem.picture == Picture::schroedinger) {
        schro_rot.reserve(grid.size());
        for (double t : grid) schro_rot.push_back(expm(Eigen::MatrixXd(-t * adj_h)));
    }

    auto simulate = [&](std::uint64_t index, Eigen::MatrixXd& sample) {
        GaussianStream stream(config.master_seed, index);
        Eigen::VectorXd r = problem.r0;
        Eigen::VectorXd w1(dim), w2(dim);
        sample.row(0) = r.transpose();
        int step = 0;
        for (std::size_t seg = 0; seg + 1 < grid.size(); ++seg) {
            for (int s = 0; s < layout.substeps[seg]; ++s, ++step) {
                for (int c = 0; c < n_channels; ++c) {
                    const double db = sigma * stream.normal();
                    const double g = problem.channels[c].gamma(step_time[step]);
                    if (g == 0.0) continue;
                    const auto& a = adj_l[step][c];
                    const double theta = adj_theta[step][c];
                    if (dim == 3 && theta > 1e-300) {
                        // Rodrigues update, angle scales with the increment
                        const double phi = g * db * theta;
                        w1.noalias() = a * r;
                        w2.noalias() = a * w1;
                        r += (std::sin(phi) / theta) * w1 +
                             ((1.0 - std::cos(phi)) / (theta * theta)) * w2;
                    } else if (dim != 3) {
                        r = rotation_exp(Eigen::MatrixXd((g * db) * a)) * r;
                    }
                }
            }
            if (problem.picture == Picture::schroedinger)
                sample.row(seg + 1) = (schro_rot[seg + 1] * r).transpose();
            else
                sample.row(seg + 1) = r.transpose();
        }
    };

    EnsembleResult result = run_ensemble(config, grid, dim, exec, simulate);
    result.trajectory.meta.method = "mc-bloch";
    return result;
}

}  // namespace blochsim
