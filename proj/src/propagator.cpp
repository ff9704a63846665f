#include "blochsim/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "blochsim/matexp.hpp"
#include "blochsim/quadrature.hpp"

namespace blochsim {

// ---------------------------------------------------------------------------
// GammaProfile

GammaProfile GammaProfile::constant(double g0) {
    if (g0 < 0.0) throw std::invalid_argument("GammaProfile: negative strength");
    GammaProfile p;
    p.kind_ = Kind::constant;
    p.g0_ = g0;
    return p;
}

GammaProfile GammaProfile::exponential_decay(double g0, double tau) {
    if (g0 < 0.0) throw std::invalid_argument("GammaProfile: negative strength");
    if (tau <= 0.0) throw std::invalid_argument("GammaProfile: decay time must be positive");
    GammaProfile p;
    p.kind_ = Kind::exponential_decay;
    p.g0_ = g0;
    p.tau_ = tau;
    return p;
}

GammaProfile GammaProfile::tabulated(std::vector<double> times, std::vector<double> values) {
    if (times.size() != values.size() || times.size() < 2)
        throw std::invalid_argument("GammaProfile: table needs >= 2 matching samples");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] <= times[i - 1])
            throw std::invalid_argument("GammaProfile: table times must be strictly increasing");
    for (double v : values)
        if (v < 0.0) throw std::invalid_argument("GammaProfile: negative strength in table");
    GammaProfile p;
    p.kind_ = Kind::tabulated;
    p.times_ = std::move(times);
    p.values_ = std::move(values);
    return p;
}

double GammaProfile::operator()(double t) const {
    switch (kind_) {
        case Kind::constant:
            return g0_;
        case Kind::exponential_decay:
            return g0_ * std::exp(-t / tau_);
        case Kind::tabulated: {
            if (t <= times_.front()) return values_.front();
            if (t >= times_.back()) return values_.back();
            auto it = std::upper_bound(times_.begin(), times_.end(), t);
            std::size_t hi = static_cast<std::size_t>(it - times_.begin());
            std::size_t lo = hi - 1;
            double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
            return values_[lo] + w * (values_[hi] - values_[lo]);
        }
    }
    return g0_;
}

double GammaProfile::sup() const {
    switch (kind_) {
        case Kind::constant:
        case Kind::exponential_decay:
            return g0_;
        case Kind::tabulated:
            return *std::max_element(values_.begin(), values_.end());
    }
    return g0_;
}

double GammaProfile::constant_value() const {
    if (kind_ != Kind::constant)
        throw std::logic_error("GammaProfile: not a constant profile");
    return g0_;
}

// ---------------------------------------------------------------------------
// EvolutionProblem

EvolutionProblem::EvolutionProblem(StructureTensor f_, Eigen::VectorXd h_,
                                   std::vector<Channel> channels_, Eigen::VectorXd r0_,
                                   Picture picture_)
    : f(std::move(f_)),
      h(std::move(h_)),
      channels(std::move(channels_)),
      r0(std::move(r0_)),
      picture(picture_) {
    const int d = f.dim();
    if (h.size() != d || r0.size() != d)
        throw std::invalid_argument("EvolutionProblem: dimension mismatch");
    for (const auto& channel : channels)
        if (channel.l.size() != d)
            throw std::invalid_argument("EvolutionProblem: channel dimension mismatch");
    if (channels.empty() && h.isZero(0.0))
        throw std::invalid_argument(
            "EvolutionProblem: needs a Hamiltonian or at least one channel");
}

// ---------------------------------------------------------------------------

Eigen::VectorXd heisenberg_transform(const Eigen::VectorXd& l, const Eigen::VectorXd& h,
                                     double t, const StructureTensor& f) {
    if (l.size() != f.dim() || h.size() != f.dim())
        throw std::invalid_argument("heisenberg_transform: dimension mismatch");
    return expm(Eigen::MatrixXd(t * adjoint_matrix(h, f))) * l;
}

Eigen::MatrixXd bloch_generator(const EvolutionProblem& problem, double t) {
    const int d = problem.f.dim();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
    const Eigen::MatrixXd rot = expm(Eigen::MatrixXd(t * adjoint_matrix(problem.h, problem.f)));
    for (const auto& channel : problem.channels) {
        const double gamma = channel.gamma(t);
        if (gamma == 0.0) continue;
        const Eigen::MatrixXd adj = adjoint_matrix(rot * channel.l, problem.f);
        g += (0.5 * gamma * gamma) * (adj * adj);
    }
    return g;
}

namespace {

double spectral_norm(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    return m.jacobiSvd().singularValues()(0);
}

// dt = 0.01 / max(unitary rate, dissipative rate), capped by the grid spacing
double default_step(const EvolutionProblem& problem, double min_interval) {
    const double omega_max = spectral_norm(adjoint_matrix(problem.h, problem.f));
    double rate_diss = 0.0;
    for (const auto& channel : problem.channels) {
        const double g = channel.gamma.sup();
        const double a = spectral_norm(adjoint_matrix(channel.l, problem.f));
        rate_diss += 0.5 * g * g * a * a;
    }
    const double rate = std::max(omega_max, rate_diss);
    double dt = rate > 0.0 ? 0.01 / rate : min_interval;
    return std::min(dt, min_interval);
}

void validate_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("time grid is empty");
    if (std::abs(grid.front()) > 1e-15)
        throw std::invalid_argument("time grid must start at 0");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1])
            throw std::invalid_argument("time grid must be strictly increasing");
}

// One full RK4 pass over the grid; writes the Heisenberg-picture Bloch
// vector at every grid point.
std::vector<Eigen::VectorXd> integrate_bloch_ode(const EvolutionProblem& problem,
                                                 const std::vector<double>& grid, double dt) {
    const int d = problem.f.dim();
    const std::size_t n_channels = problem.channels.size();
    const Eigen::MatrixXd adj_h = adjoint_matrix(problem.h, problem.f);

    std::vector<Eigen::VectorXd> out;
    out.reserve(grid.size());
    out.push_back(problem.r0);

    Eigen::VectorXd r = problem.r0;
    std::vector<Eigen::VectorXd> l_heis(n_channels);

    auto generator = [&](double t, const std::vector<Eigen::VectorXd>& ls) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
        for (std::size_t k = 0; k < n_channels; ++k) {
            const double gamma = problem.channels[k].gamma(t);
            if (gamma == 0.0) continue;
            const Eigen::MatrixXd adj = adjoint_matrix(ls[k], problem.f);
            g += (0.5 * gamma * gamma) * (adj * adj);
        }
        return g;
    };

    double half_cached = -1.0;
    Eigen::MatrixXd e_half;  // exp(adj_h * h/2), advances l^H between stages

    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double t0 = grid[i - 1];
        const double span = grid[i] - t0;
        const int substeps = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
        const double h = span / substeps;

        if (h / 2.0 != half_cached) {
            half_cached = h / 2.0;
            e_half = expm(Eigen::MatrixXd(half_cached * adj_h));
        }
        // reset l^H exactly at the interval start to avoid drift accumulation
        const Eigen::MatrixXd rot0 = expm(Eigen::MatrixXd(t0 * adj_h));
        for (std::size_t k = 0; k < n_channels; ++k)
            l_heis[k] = rot0 * problem.channels[k].l;

        std::vector<Eigen::VectorXd> l_mid(n_channels), l_end(n_channels);
        double t = t0;
        for (int s = 0; s < substeps; ++s) {
            for (std::size_t k = 0; k < n_channels; ++k) {
                l_mid[k] = e_half * l_heis[k];
                l_end[k] = e_half * l_mid[k];
            }
            const Eigen::MatrixXd g1 = generator(t, l_heis);
            const Eigen::MatrixXd g2 = generator(t + h / 2.0, l_mid);
            const Eigen::MatrixXd g3 = generator(t + h, l_end);

            const Eigen::VectorXd k1 = g1 * r;
            const Eigen::VectorXd k2 = g2 * (r + (h / 2.0) * k1);
            const Eigen::VectorXd k3 = g2 * (r + (h / 2.0) * k2);
            const Eigen::VectorXd k4 = g3 * (r + h * k3);
            r += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

            l_heis = l_end;
            t += h;
        }
        out.push_back(r);
    }
    return out;
}

void apply_schroedinger_rotation(const EvolutionProblem& problem,
                                 const std::vector<double>& grid,
                                 std::vector<Eigen::VectorXd>& bloch) {
    const Eigen::MatrixXd adj_h = adjoint_matrix(problem.h, problem.f);
    for (std::size_t i = 0; i < grid.size(); ++i)
        bloch[i] = expm(Eigen::MatrixXd(-grid[i] * adj_h)) * bloch[i];
}

}  // namespace

Trajectory evolve_formula(const EvolutionProblem& problem, const std::vector<double>& grid,
                          const EvolveOptions& options) {
    validate_grid(grid);

    double min_interval = grid.size() > 1 ? grid[1] - grid[0] : 1.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        min_interval = std::min(min_interval, grid[i] - grid[i - 1]);

    const double dt = options.dt > 0.0 ? options.dt : default_step(problem, min_interval);

    Trajectory trajectory;
    trajectory.times = grid;
    trajectory.bloch = integrate_bloch_ode(problem, grid, dt);
    trajectory.meta.method = "formula";
    trajectory.meta.dt = dt;

    if (options.check_step_halving && grid.size() > 1) {
        const auto finer = integrate_bloch_ode(problem, grid, dt / 2.0);
        double max_diff = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i)
            max_diff = std::max(max_diff,
                                (trajectory.bloch[i] - finer[i]).cwiseAbs().maxCoeff());
        trajectory.meta.step_halving_diff = max_diff;
        trajectory.meta.accuracy_warning = max_diff > 1e-6;
    }

    if (problem.picture == Picture::schroedinger)
        apply_schroedinger_rotation(problem, grid, trajectory.bloch);

    return trajectory;
}

// ---------------------------------------------------------------------------
// Dyson series

namespace {

Eigen::VectorXd barycentric(const std::vector<double>& nodes, const std::vector<double>& weights,
                            const std::vector<Eigen::VectorXd>& values, double x) {
    const std::size_t n = nodes.size();
    double denom = 0.0;
    Eigen::VectorXd numer = Eigen::VectorXd::Zero(values.front().size());
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = x - nodes[i];
        if (std::abs(diff) < 1e-14) return values[i];
        const double w = weights[i] / diff;
        numer += w * values[i];
        denom += w;
    }
    return numer / denom;
}

double series_tail(double kt, int order, double r0_norm) {
    if (kt <= 0.0) return 0.0;
    // sum_{m>order} (kt)^m / m!, term-by-term from m = order+1
    double log_term = (order + 1) * std::log(kt) - std::lgamma(order + 2.0);
    double term = std::exp(log_term);
    double sum = 0.0;
    for (int m = order + 1; m < order + 2000; ++m) {
        sum += term;
        term *= kt / (m + 1);
        if (term < 1e-18 * (sum + 1e-300)) break;
    }
    return r0_norm * sum;
}

}  // namespace

Eigen::VectorXd dyson_series(const EvolutionProblem& problem, double t, int order,
                             const DysonOptions& options, double* tail_bound) {
    if (order < 0) throw std::invalid_argument("dyson_series: order must be >= 0");
    if (t < 0.0) throw std::invalid_argument("dyson_series: negative time");
    const int q = options.nodes;
    if (q < 2) throw std::invalid_argument("dyson_series: need at least 2 nodes");

    if (t == 0.0 || order == 0 || problem.channels.empty()) {
        // K = ||G|| = (1/2)||B|| still bounds the dropped generator
        if (tail_bound) {
            const double k = spectral_norm(bloch_generator(problem, 0.0));
            *tail_bound = series_tail(k * t, order, problem.r0.norm());
        }
        Eigen::VectorXd r = problem.r0;
        if (problem.picture == Picture::schroedinger && t > 0.0)
            r = expm(Eigen::MatrixXd(-t * adjoint_matrix(problem.h, problem.f))) * problem.r0;
        return r;
    }

    const auto& rule = gauss_legendre(q);
    const int d = problem.f.dim();

    // outer targets: the q interpolation nodes mapped to [0,t], plus t itself
    std::vector<double> targets(q + 1);
    for (int i = 0; i < q; ++i) targets[i] = 0.5 * t * (rule.nodes[i] + 1.0);
    targets[q] = t;

    // G at every (target, inner-node) pair; reused at every nesting level
    std::vector<std::vector<Eigen::MatrixXd>> gsub(q + 1, std::vector<Eigen::MatrixXd>(q));
    double sup_b = 2.0 * spectral_norm(bloch_generator(problem, 0.0));
    for (int i = 0; i <= q; ++i) {
        const double y = targets[i];
        for (int j = 0; j < q; ++j) {
            const double u = 0.5 * y * (rule.nodes[j] + 1.0);
            gsub[i][j] = bloch_generator(problem, u);
            sup_b = std::max(sup_b, 2.0 * spectral_norm(gsub[i][j]));
        }
    }

    // inner-node positions in the reference coordinate of the outer node set
    // (xi = 2u/t - 1), for interpolating the previous level
    std::vector<std::vector<double>> xi(q + 1, std::vector<double>(q));
    for (int i = 0; i <= q; ++i)
        for (int j = 0; j < q; ++j)
            xi[i][j] = (targets[i] / t) * (rule.nodes[j] + 1.0) - 1.0;

    Eigen::VectorXd result = problem.r0;
    std::vector<Eigen::VectorXd> prev(q, problem.r0);  // T_0 on the node set
    std::vector<Eigen::VectorXd> cur(q);

    for (int m = 1; m <= order; ++m) {
        for (int i = 0; i <= q; ++i) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
            const double half_y = 0.5 * targets[i];
            for (int j = 0; j < q; ++j) {
                const Eigen::VectorXd inner =
                    (m == 1) ? problem.r0
                             : barycentric(rule.nodes, rule.bary, prev, xi[i][j]);
                acc += (half_y * rule.weights[j]) * (gsub[i][j] * inner);
            }
            if (i < q)
                cur[i] = acc;
            else
                result += acc;
        }
        std::swap(prev, cur);
    }

    if (tail_bound) *tail_bound = series_tail(0.5 * sup_b * t, order, problem.r0.norm());

    if (problem.picture == Picture::schroedinger)
        result = expm(Eigen::MatrixXd(-t * adjoint_matrix(problem.h, problem.f))) * result;
    return result;
}

// ---------------------------------------------------------------------------
// Perturbation series in the channel strength

Eigen::VectorXd perturbation_series(const EvolutionProblem& problem, double t, int order,
                                    double gamma, const DysonOptions& options) {
    if (order < 0) throw std::invalid_argument("perturbation_series: order must be >= 0");
    if (order > 2)
        throw std::invalid_argument(
            "perturbation_series: orders above 2 are not supported");
    if (problem.channels.size() != 1)
        throw std::invalid_argument("perturbation_series: needs exactly one channel");
    const auto& channel = problem.channels.front();
    if (std::abs(channel.l.norm() - 1.0) > 1e-9)
        throw std::invalid_argument(
            "perturbation_series: channel vector must be unit-normalized");
    if (!channel.gamma.is_constant() || std::abs(channel.gamma.constant_value() - 1.0) > 1e-12)
        throw std::invalid_argument(
            "perturbation_series: channel strength must be factored into gamma");

    const int q = options.nodes;
    const auto& rule = gauss_legendre(q);
    const Eigen::MatrixXd adj_h = adjoint_matrix(problem.h, problem.f);

    auto boxdot_matrix = [&](double u) {
        const Eigen::MatrixXd adj =
            adjoint_matrix(expm(Eigen::MatrixXd(u * adj_h)) * channel.l, problem.f);
        return Eigen::MatrixXd(adj * adj);
    };

    Eigen::VectorXd result = problem.r0;
    if (order >= 1 && t > 0.0) {
        Eigen::VectorXd first = Eigen::VectorXd::Zero(problem.f.dim());
        for (int i = 0; i < q; ++i) {
            const double t1 = 0.5 * t * (rule.nodes[i] + 1.0);
            first += (0.5 * t * rule.weights[i]) * (boxdot_matrix(t1) * problem.r0);
        }
        result += (gamma / 2.0) * first;

        if (order == 2) {
            Eigen::VectorXd second = Eigen::VectorXd::Zero(problem.f.dim());
            for (int i = 0; i < q; ++i) {
                const double t1 = 0.5 * t * (rule.nodes[i] + 1.0);
                Eigen::VectorXd inner = Eigen::VectorXd::Zero(problem.f.dim());
                for (int j = 0; j < q; ++j) {
                    const double t2 = 0.5 * t1 * (rule.nodes[j] + 1.0);
                    inner += (0.5 * t1 * rule.weights[j]) * (boxdot_matrix(t2) * problem.r0);
                }
                second += (0.5 * t * rule.weights[i]) * (boxdot_matrix(t1) * inner);
            }
            result += (gamma * gamma / 4.0) * second;
        }
    }

    if (problem.picture == Picture::schroedinger && t > 0.0)
        result = expm(Eigen::MatrixXd(-t * adj_h)) * result;
    return result;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd commuting_closed_form(const EvolutionProblem& problem, double t) {
    const int d = problem.f.dim();
    Eigen::MatrixXd exponent = Eigen::MatrixXd::Zero(d, d);
    for (const auto& channel : problem.channels) {
        const double mismatch = odot(problem.h, channel.l, problem.f).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, problem.h.norm() * channel.l.norm());
        if (mismatch > 1e-12 * scale) {
            std::ostringstream msg;
            msg << "commuting_closed_form: channel does not commute with the Hamiltonian "
                   "(|h (.) l| = "
                << mismatch << ")";
            throw std::invalid_argument(msg.str());
        }
        if (!channel.gamma.is_constant())
            throw std::invalid_argument(
                "commuting_closed_form: requires constant channel strengths");
        const double g = channel.gamma.constant_value();
        const Eigen::MatrixXd adj = adjoint_matrix(channel.l, problem.f);
        exponent += (0.5 * g * g * t) * (adj * adj);
    }
    Eigen::VectorXd r = expm(exponent) * problem.r0;
    if (problem.picture == Picture::schroedinger && t != 0.0)
        r = expm(Eigen::MatrixXd(-t * adjoint_matrix(problem.h, problem.f))) * r;
    return r;
}

Eigen::Vector3d qubit_second_order(const Eigen::Vector3d& r0, double w0, double gamma,
                                   double t) {
    const double k = gamma / (2.0 * w0);
    const double x = w0 * t;
    const double s2 = std::sin(2.0 * x);
    const double c2 = std::cos(2.0 * x);

    const double xx = 1.0 - k * (x / 2.0) * (1.0 - sinc(2.0 * x)) +
                      (k * k / 16.0) * (1.0 + 2.0 * x * x - c2 - 2.0 * x * s2);
    const double xy = -k * (x * x / 2.0) * sinc(x) * sinc(x) +
                      (k * k / 16.0) * (4.0 * x - 2.0 * x * c2 - s2);
    // second-order part carries the opposite sign from the first-order one
    const double yx = -k * (x * x / 2.0) * sinc(x) * sinc(x) -
                      (k * k / 16.0) * (2.0 * x * c2 - s2);
    const double yy = 1.0 - k * (x / 2.0) * (1.0 + sinc(2.0 * x)) +
                      (k * k / 16.0) * (1.0 + 2.0 * x * x - c2 + 2.0 * x * s2);

    Eigen::Vector3d r;
    r(0) = xx * r0(0) + xy * r0(1);
    r(1) = yx * r0(0) + yy * r0(1);
    r(2) = std::exp(-gamma * t / 2.0) * r0(2);
    return r;
}

double purity_first_order(double w0, double gamma, double t) {
    return 1.0 - (gamma * t / 2.0) * (1.0 - sinc(2.0 * w0 * t));
}

}  // namespace blochsim
