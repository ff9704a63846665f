#pragma once

#include <vector>

namespace blochsim {

// Gauss-Legendre rule on [-1,1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;
    // barycentric interpolation weights for the nodes, normalized to max 1
    std::vector<double> bary;
};

// Nodes/weights by Newton iteration on the Legendre polynomial; accurate to
// ~1e-15 for n <= 128.  Results are cached per n.
const GaussLegendre& gauss_legendre(int n);

}  // namespace blochsim
