#pragma once

#include <Eigen/Dense>

namespace blochsim {

// Dense matrix exponential by Pade-13 scaling and squaring (Higham 2005).
// Intended for the small matrices of this library (dimension <= ~64).
Eigen::MatrixXd expm(const Eigen::MatrixXd& a);
Eigen::MatrixXcd expm(const Eigen::MatrixXcd& a);

// exp(-i K) for Hermitian K, exactly unitary up to roundoff.
// Uses the Pauli closed form for 2x2 and an eigendecomposition otherwise.
Eigen::MatrixXcd unitary_exp(const Eigen::MatrixXcd& k);
// allocation-free variant for hot loops; `u` must be preallocated to k's shape
void unitary_exp_inplace(const Eigen::MatrixXcd& k, Eigen::MatrixXcd& u);

// exp(A) for antisymmetric A (an orthogonal matrix).  Rodrigues formula
// for 3x3, generic expm otherwise.
Eigen::MatrixXd rotation_exp(const Eigen::MatrixXd& a);

}  // namespace blochsim
