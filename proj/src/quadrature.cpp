#include "blochsim/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace blochsim {

namespace {

GaussLegendre compute_rule(int n) {
    if (n < 1 || n > 128) throw std::invalid_argument("gauss_legendre: order out of range");
    GaussLegendre rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);

    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Chebyshev-like initial guess for the i-th root
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Legendre recurrence P_0..P_n and derivative at x
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }

    // generic barycentric weights 1/prod(x_i - x_j), normalized
    rule.bary.assign(n, 1.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i) rule.bary[i] /= (rule.nodes[i] - rule.nodes[j]);
    double wmax = 0.0;
    for (double w : rule.bary) wmax = std::max(wmax, std::abs(w));
    for (double& w : rule.bary) w /= wmax;
    return rule;
}

}  // namespace

const GaussLegendre& gauss_legendre(int n) {
    static std::mutex mutex;
    static std::map<int, GaussLegendre> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_rule(n)).first;
    return it->second;
}

}  // namespace blochsim
