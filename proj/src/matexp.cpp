#include "blochsim/matexp.hpp"

#include <cmath>
#include <complex>

namespace blochsim {

namespace {

// Pade-13 coefficients
constexpr double kPade13[] = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};

// ||A||_1 threshold below which the unscaled Pade-13 approximant is
// accurate to double precision
constexpr double kTheta13 = 5.371920351148152;

template <typename Matrix>
Matrix expm_pade13(const Matrix& a) {
    const auto n = a.rows();
    const Matrix ident = Matrix::Identity(n, n);

    double norm = a.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    Matrix scaled = a;
    if (norm > kTheta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm / kTheta13)));
        scaled *= std::pow(2.0, -squarings);
    }

    const Matrix a2 = scaled * scaled;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a2 * a4;

    Matrix u = scaled * (a6 * (kPade13[13] * a6 + kPade13[11] * a4 + kPade13[9] * a2) +
                         kPade13[7] * a6 + kPade13[5] * a4 + kPade13[3] * a2 +
                         kPade13[1] * ident);
    Matrix v = a6 * (kPade13[12] * a6 + kPade13[10] * a4 + kPade13[8] * a2) +
               kPade13[6] * a6 + kPade13[4] * a4 + kPade13[2] * a2 +
               kPade13[0] * ident;

    Matrix result = (v - u).partialPivLu().solve(v + u);
    for (int i = 0; i < squarings; ++i) result = result * result;
    return result;
}

}  // namespace

Eigen::MatrixXd expm(const Eigen::MatrixXd& a) { return expm_pade13(a); }

Eigen::MatrixXcd expm(const Eigen::MatrixXcd& a) { return expm_pade13(a); }

void unitary_exp_inplace(const Eigen::MatrixXcd& k, Eigen::MatrixXcd& u) {
    using namespace std::complex_literals;
    const auto n = k.rows();
    if (n == 2) {
        // K = a0 I + a.sigma  ->  exp(-iK) = e^{-i a0}(cos|a| I - i sin|a| ahat.sigma)
        const double a0 = 0.5 * std::real(k(0, 0) + k(1, 1));
        const double ax = std::real(k(0, 1));
        const double ay = -std::imag(k(0, 1));
        const double az = 0.5 * std::real(k(0, 0) - k(1, 1));
        const double r = std::sqrt(ax * ax + ay * ay + az * az);
        const std::complex<double> phase = std::exp(-1i * a0);
        double c = std::cos(r);
        double s_over_r = (r > 1e-150) ? std::sin(r) / r : 1.0;
        u(0, 0) = phase * (c - 1i * s_over_r * az);
        u(0, 1) = phase * (-1i * s_over_r * (ax - 1i * ay));
        u(1, 0) = phase * (-1i * s_over_r * (ax + 1i * ay));
        u(1, 1) = phase * (c + 1i * s_over_r * az);
        return;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(k);
    Eigen::VectorXcd phases(n);
    for (Eigen::Index j = 0; j < n; ++j)
        phases(j) = std::exp(-1i * es.eigenvalues()(j));
    u.noalias() = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

Eigen::MatrixXcd unitary_exp(const Eigen::MatrixXcd& k) {
    Eigen::MatrixXcd u(k.rows(), k.cols());
    unitary_exp_inplace(k, u);
    return u;
}

Eigen::MatrixXd rotation_exp(const Eigen::MatrixXd& a) {
    if (a.rows() == 3) {
        const double wx = a(2, 1), wy = a(0, 2), wz = a(1, 0);
        const double theta = std::sqrt(wx * wx + wy * wy + wz * wz);
        Eigen::MatrixXd result = Eigen::MatrixXd::Identity(3, 3);
        if (theta < 1e-150) return result;
        const double s = std::sin(theta) / theta;
        const double c = (1.0 - std::cos(theta)) / (theta * theta);
        result += s * a + c * (a * a);
        return result;
    }
    return expm(a);
}

}  // namespace blochsim
