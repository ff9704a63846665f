#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "blochsim/matexp.hpp"
#include "blochsim/rng.hpp"

using namespace blochsim;
using Complex = std::complex<double>;

namespace {

// slow Taylor reference with scaling
template <typename Matrix>
Matrix expm_taylor(const Matrix& a) {
    const auto n = a.rows();
    int scale = 0;
    double norm = a.cwiseAbs().maxCoeff() * n;
    while (norm > 0.25) {
        norm /= 2;
        ++scale;
    }
    Matrix x = a / std::pow(2.0, scale);
    Matrix term = Matrix::Identity(n, n);
    Matrix sum = term;
    for (int k = 1; k < 40; ++k) {
        term = term * x / double(k);
        sum += term;
    }
    for (int i = 0; i < scale; ++i) sum = sum * sum;
    return sum;
}

Eigen::MatrixXd random_real(int n, GaussianStream& stream) {
    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) m(r, c) = stream.normal();
    return m;
}

}  // namespace

TEST_CASE("expm of zero is the identity") {
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 4);
    CHECK((expm(zero) - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("expm matches the Taylor reference on random matrices") {
    GaussianStream stream(21, 0);
    for (int n : {2, 3, 5, 8}) {
        for (int trial = 0; trial < 10; ++trial) {
            const Eigen::MatrixXd a = random_real(n, stream);
            CHECK((expm(a) - expm_taylor(a)).cwiseAbs().maxCoeff() < 1e-11);
        }
    }
}

TEST_CASE("expm handles large norms through scaling") {
    GaussianStream stream(22, 0);
    // symmetric case with a known eigendecomposition route
    Eigen::MatrixXd a = random_real(5, stream);
    a = Eigen::MatrixXd(25.0 * (a + a.transpose()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::MatrixXd expected = es.eigenvectors() *
                                     es.eigenvalues().array().exp().matrix().asDiagonal() *
                                     es.eigenvectors().transpose();
    const double scale = expected.cwiseAbs().maxCoeff();
    CHECK((expm(a) - expected).cwiseAbs().maxCoeff() / scale < 1e-12);
}

TEST_CASE("expm of the planar rotation generator") {
    const double w = 1.7, t = 2.3;
    Eigen::MatrixXd a(3, 3);
    a << 0, w, 0, -w, 0, 0, 0, 0, 0;
    const Eigen::MatrixXd r = expm(Eigen::MatrixXd(t * a));
    CHECK(r(0, 0) == doctest::Approx(std::cos(w * t)).epsilon(1e-14));
    CHECK(r(0, 1) == doctest::Approx(std::sin(w * t)).epsilon(1e-14));
    CHECK(r(1, 0) == doctest::Approx(-std::sin(w * t)).epsilon(1e-14));
    CHECK(r(2, 2) == doctest::Approx(1.0));
}

TEST_CASE("complex expm matches Taylor") {
    GaussianStream stream(23, 0);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXcd a(3, 3);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) a(r, c) = Complex(stream.normal(), stream.normal());
        CHECK((expm(a) - expm_taylor(a)).cwiseAbs().maxCoeff() < 1e-11);
    }
}

TEST_CASE("unitary_exp is unitary and matches expm(-iK)") {
    GaussianStream stream(24, 0);
    for (int n : {2, 3, 4}) {
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::MatrixXcd k(n, n);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) k(r, c) = Complex(stream.normal(), stream.normal());
            k = Eigen::MatrixXcd(0.5 * (k + k.adjoint()));
            const Eigen::MatrixXcd u = unitary_exp(k);
            CHECK((u * u.adjoint() - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff() <
                  1e-13);
            const Eigen::MatrixXcd expected = expm(Eigen::MatrixXcd(Complex(0, -1) * k));
            CHECK((u - expected).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("rotation_exp matches expm for antisymmetric generators") {
    GaussianStream stream(25, 0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd a = random_real(3, stream);
        a = Eigen::MatrixXd(a - a.transpose());
        const Eigen::MatrixXd r = rotation_exp(a);
        CHECK((r - expm(a)).cwiseAbs().maxCoeff() < 1e-13);
        CHECK((r * r.transpose() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <
              1e-13);
    }
    // non-3x3 falls back to expm
    Eigen::MatrixXd b = random_real(5, stream);
    b = Eigen::MatrixXd(b - b.transpose());
    CHECK((rotation_exp(b) - expm(b)).cwiseAbs().maxCoeff() < 1e-12);
}
