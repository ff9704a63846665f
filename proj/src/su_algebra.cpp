#include "blochsim/su_algebra.hpp"

#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>

namespace blochsim {

namespace {

using Complex = std::complex<double>;

std::array<int, 3> sorted_key(int i, int j, int k, int& sign) {
    std::array<int, 3> key = {i, j, k};
    sign = 1;
    if (key[0] > key[1]) { std::swap(key[0], key[1]); sign = -sign; }
    if (key[1] > key[2]) { std::swap(key[1], key[2]); sign = -sign; }
    if (key[0] > key[1]) { std::swap(key[0], key[1]); sign = -sign; }
    return key;
}

double hermiticity_residual(const Eigen::MatrixXcd& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

}  // namespace

GeneratorBasis build_generators(int n) {
    if (n < 2) throw std::invalid_argument("build_generators: dimension must be >= 2");

    GeneratorBasis basis;
    basis.dim = n;
    basis.scale = 2.0;
    basis.matrices.reserve(n * n - 1);

    // symmetric pairs: |j><k| + |k><j|
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
            Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
            m(j, k) = 1.0;
            m(k, j) = 1.0;
            basis.matrices.push_back(std::move(m));
        }

    // antisymmetric pairs: -i|j><k| + i|k><j|
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
            Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
            m(j, k) = Complex(0.0, -1.0);
            m(k, j) = Complex(0.0, 1.0);
            basis.matrices.push_back(std::move(m));
        }

    // diagonal ladder: sqrt(2/(l(l+1))) (sum_{m<l} |m><m| - l|l><l|)
    for (int l = 1; l < n; ++l) {
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
        const double factor = std::sqrt(2.0 / (l * (l + 1.0)));
        for (int j = 0; j < l; ++j) m(j, j) = factor;
        m(l, l) = -l * factor;
        basis.matrices.push_back(std::move(m));
    }

    return basis;
}

void StructureTensor::insert(int i, int j, int k, double value) {
    int sign = 1;
    auto key = sorted_key(i, j, k, sign);
    if (key[0] == key[1] || key[1] == key[2])
        throw std::invalid_argument("StructureTensor: repeated index in entry");
    entries_[key] = sign * value;
    max_abs_ = std::max(max_abs_, std::abs(value));
}

double StructureTensor::get(int i, int j, int k) const {
    if (i == j || j == k || i == k) return 0.0;
    int sign = 1;
    auto key = sorted_key(i, j, k, sign);
    auto it = entries_.find(key);
    return it == entries_.end() ? 0.0 : sign * it->second;
}

StructureTensor StructureTensor::from_basis(const GeneratorBasis& basis) {
    const int d = basis.bloch_dim();
    const double s = basis.scale;

    StructureTensor tensor;
    tensor.dim_ = d;
    tensor.derived_scale_ = s;

    // raw extraction for every pair i<j and every k; total antisymmetry is
    // then checked across the three extractions of each sorted triple
    std::vector<std::vector<double>> raw(d * d, std::vector<double>());
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const Eigen::MatrixXcd comm = basis.matrices[i] * basis.matrices[j] -
                                          basis.matrices[j] * basis.matrices[i];
            auto& row = raw[i * d + j];
            row.resize(d);
            for (int k = 0; k < d; ++k) {
                const Complex trace = (comm * basis.matrices[k]).trace();
                // Tr([l_i,l_j] l_k) = 2 i s f_ijk; a real part signals a
                // basis that is not trace-orthogonal
                if (std::abs(trace.real()) > 1e-10)
                    throw std::invalid_argument(
                        "structure_constants: inconsistent basis (non-imaginary trace)");
                row[k] = trace.imag() / (2.0 * s);
            }
        }

    // the extraction rule presumes trace orthogonality; verify it by
    // reconstructing each commutator from the extracted coefficients
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const Eigen::MatrixXcd comm = basis.matrices[i] * basis.matrices[j] -
                                          basis.matrices[j] * basis.matrices[i];
            Eigen::MatrixXcd rebuilt = Eigen::MatrixXcd::Zero(basis.dim, basis.dim);
            for (int k = 0; k < d; ++k)
                rebuilt += Complex(0.0, 2.0 * raw[i * d + j][k]) * basis.matrices[k];
            const double residual = (comm - rebuilt).cwiseAbs().maxCoeff();
            if (residual > 1e-10 * std::max(1.0, comm.cwiseAbs().maxCoeff())) {
                std::ostringstream msg;
                msg << "structure_constants: inconsistent basis, commutator (" << i << ","
                    << j << ") reconstruction residual " << residual;
                throw std::invalid_argument(msg.str());
            }
        }

    constexpr double kTol = 1e-10;
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const auto& row = raw[i * d + j];
            // entries with a repeated index must vanish
            if (std::abs(row[i]) > kTol || std::abs(row[j]) > kTol)
                throw std::invalid_argument(
                    "structure_constants: inconsistent basis (f with repeated index)");
            for (int k = j + 1; k < d; ++k) {
                const double f_ijk = row[k];
                const double f_ikj = raw[i * d + k][j];  // must equal -f_ijk
                const double f_jki = raw[j * d + k][i];  // must equal +f_ijk
                if (std::abs(f_ikj + f_ijk) > kTol || std::abs(f_jki - f_ijk) > kTol) {
                    std::ostringstream msg;
                    msg << "structure_constants: permutation mismatch at (" << i << ","
                        << j << "," << k << "): " << f_ijk << " / " << -f_ikj << " / "
                        << f_jki;
                    throw std::invalid_argument(msg.str());
                }
                if (std::abs(f_ijk) >= 1e-12) tensor.insert(i, j, k, f_ijk);
            }
        }

    return tensor;
}

StructureTensor StructureTensor::from_entries(
    int dim, const std::vector<std::array<int, 3>>& indices,
    const std::vector<double>& values, double derived_scale) {
    if (indices.size() != values.size())
        throw std::invalid_argument("StructureTensor: index/value count mismatch");
    StructureTensor tensor;
    tensor.dim_ = dim;
    tensor.derived_scale_ = derived_scale;
    for (std::size_t e = 0; e < indices.size(); ++e) {
        const auto& idx = indices[e];
        for (int component : idx)
            if (component < 0 || component >= dim)
                throw std::invalid_argument("StructureTensor: index out of range");
        if (std::abs(values[e]) >= 1e-12) tensor.insert(idx[0], idx[1], idx[2], values[e]);
    }
    return tensor;
}

Eigen::VectorXd odot(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const StructureTensor& f) {
    if (a.size() != f.dim() || b.size() != f.dim())
        throw std::invalid_argument("odot: dimension mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(f.dim());
    for (const auto& [key, value] : f.entries()) {
        const auto [i, j, k] = key;
        const double w = -2.0 * value;
        out(k) += w * (a(i) * b(j) - a(j) * b(i));
        out(i) += w * (a(j) * b(k) - a(k) * b(j));
        out(j) += w * (a(k) * b(i) - a(i) * b(k));
    }
    return out;
}

Eigen::VectorXd boxdot(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const StructureTensor& f) {
    return odot(a, odot(a, b, f), f);
}

Eigen::MatrixXd adjoint_matrix(const Eigen::VectorXd& a, const StructureTensor& f) {
    if (a.size() != f.dim())
        throw std::invalid_argument("adjoint_matrix: dimension mismatch");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(f.dim(), f.dim());
    // A_kj = -2 sum_i f_ijk a_i, scattered over the six permutations of each
    // stored triple
    for (const auto& [key, value] : f.entries()) {
        const auto [i, j, k] = key;
        const double w = -2.0 * value;
        out(k, j) += w * a(i);
        out(j, k) -= w * a(i);
        out(i, k) += w * a(j);
        out(k, i) -= w * a(j);
        out(j, i) += w * a(k);
        out(i, j) -= w * a(k);
    }
    return out;
}

CoeffVector decompose_hermitian(const Eigen::MatrixXcd& m, const GeneratorBasis& basis) {
    if (m.rows() != basis.dim || m.cols() != basis.dim)
        throw std::invalid_argument("decompose_hermitian: dimension mismatch");
    const double residual = hermiticity_residual(m);
    if (residual > 1e-10) {
        std::ostringstream msg;
        msg << "decompose_hermitian: input not Hermitian, max anti-Hermitian residual "
            << residual;
        throw std::invalid_argument(msg.str());
    }
    CoeffVector c;
    c.scalar = m.trace().real() / basis.dim;
    c.vector.resize(basis.bloch_dim());
    for (int k = 0; k < basis.bloch_dim(); ++k)
        c.vector(k) = (m * basis.matrices[k]).trace().real() / basis.scale;
    return c;
}

Eigen::MatrixXcd reconstruct(const CoeffVector& c, const GeneratorBasis& basis) {
    Eigen::MatrixXcd m =
        c.scalar * Eigen::MatrixXcd::Identity(basis.dim, basis.dim);
    for (int k = 0; k < basis.bloch_dim(); ++k) m += c.vector(k) * basis.matrices[k];
    return m;
}

Eigen::VectorXd bloch_encode(const Eigen::MatrixXcd& rho, const GeneratorBasis& basis) {
    if (rho.rows() != basis.dim || rho.cols() != basis.dim)
        throw std::invalid_argument("bloch_encode: dimension mismatch");
    const double trace_err = std::abs(rho.trace() - Complex(1.0, 0.0));
    if (trace_err > 1e-10) {
        std::ostringstream msg;
        msg << "bloch_encode: trace differs from 1 by " << trace_err;
        throw std::invalid_argument(msg.str());
    }
    const double herm = hermiticity_residual(rho);
    if (herm > 1e-10) {
        std::ostringstream msg;
        msg << "bloch_encode: input not Hermitian, residual " << herm;
        throw std::invalid_argument(msg.str());
    }
    Eigen::VectorXd r(basis.bloch_dim());
    const double factor = basis.dim / basis.scale;
    for (int k = 0; k < basis.bloch_dim(); ++k)
        r(k) = factor * (rho * basis.matrices[k]).trace().real();
    return r;
}

Eigen::MatrixXcd bloch_decode(const Eigen::VectorXd& r, const GeneratorBasis& basis) {
    if (r.size() != basis.bloch_dim())
        throw std::invalid_argument("bloch_decode: dimension mismatch");
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Identity(basis.dim, basis.dim);
    for (int k = 0; k < basis.bloch_dim(); ++k) rho += r(k) * basis.matrices[k];
    rho /= basis.dim;
    return rho;
}

}  // namespace blochsim
