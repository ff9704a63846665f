#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <vector>

namespace blochsim {

// Hermitian, traceless, trace-orthogonal generators of SU(N) with
// Tr(lambda_k lambda_n) = scale * delta_kn.  build_generators produces the
// generalized Gell-Mann set with scale = 2, ordered as all symmetric pairs
// in lexicographic (j,k) order, then all antisymmetric pairs, then the
// diagonal ladder.
struct GeneratorBasis {
    int dim = 0;  // N
    double scale = 2.0;
    std::vector<Eigen::MatrixXcd> matrices;  // N^2-1 entries

    int bloch_dim() const { return dim * dim - 1; }
};

GeneratorBasis build_generators(int n);

// Totally antisymmetric structure constants f_ijk of su(N),
// [lambda_i, lambda_j] = 2i sum_k f_ijk lambda_k.  Entries are stored
// sparsely under the index-sorted key with the sign of the sorting
// permutation folded in.
class StructureTensor {
  public:
    // Brute-force extraction f_ijk = Tr([lambda_i,lambda_j] lambda_k)/(2i s).
    // Throws if the basis is inconsistent (permuted extractions disagree).
    static StructureTensor from_basis(const GeneratorBasis& basis);

    // Direct construction from user-supplied entries (i,j,k 0-based).
    // Used for conventions that do not come from a matrix basis, e.g. the
    // qubit choice f_123 = 1/2.
    static StructureTensor from_entries(
        int dim, const std::vector<std::array<int, 3>>& indices,
        const std::vector<double>& values, double derived_scale = 2.0);

    int dim() const { return dim_; }
    double derived_scale() const { return derived_scale_; }

    // f_ijk for any index order (sign resolved through the permutation)
    double get(int i, int j, int k) const;

    double max_abs() const { return max_abs_; }
    // C = sup |c_ijk| = 2 sup |f_ijk|
    double sup_c() const { return 2.0 * max_abs_; }

    const std::map<std::array<int, 3>, double>& entries() const { return entries_; }

  private:
    StructureTensor() = default;
    void insert(int i, int j, int k, double value);

    int dim_ = 0;
    double derived_scale_ = 2.0;
    double max_abs_ = 0.0;
    std::map<std::array<int, 3>, double> entries_;
};

// (a (.) b)_k = -2 sum_ij f_ijk a_i b_j, the Bloch-space Lie product.
Eigen::VectorXd odot(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const StructureTensor& f);

// a [.] b = a (.) (a (.) b)
Eigen::VectorXd boxdot(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const StructureTensor& f);

// Matrix A with A*x = a (.) x; antisymmetric because f is.
Eigen::MatrixXd adjoint_matrix(const Eigen::VectorXd& a, const StructureTensor& f);

// Decomposition of a Hermitian operator M = c0 I + c.lambda.
struct CoeffVector {
    double scalar = 0.0;        // c0 = Tr(M)/N
    Eigen::VectorXd vector;     // c_k = Tr(M lambda_k)/s
};

CoeffVector decompose_hermitian(const Eigen::MatrixXcd& m, const GeneratorBasis& basis);
Eigen::MatrixXcd reconstruct(const CoeffVector& c, const GeneratorBasis& basis);

// rho = (1/N)(I + r.lambda)  <->  r_k = (N/s) Tr(rho lambda_k).
// Encode requires a Hermitian unit-trace input; decode performs no
// positivity check.
Eigen::VectorXd bloch_encode(const Eigen::MatrixXcd& rho, const GeneratorBasis& basis);
Eigen::MatrixXcd bloch_decode(const Eigen::VectorXd& r, const GeneratorBasis& basis);

}  // namespace blochsim
