#pragma once

#include <vector>

namespace randctl {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre rule on [lo, hi]; weights sum to (hi - lo).
QuadratureRule gauss_legendre(int n, double lo = -1.0, double hi = 1.0);

/// Gauss-Hermite rule for the standard normal law; weights sum to 1.
QuadratureRule gauss_hermite_normal(int n);

/// Gauss-Laguerre rule for the weight e^{-x} on [0, inf); weights sum to 1.
QuadratureRule gauss_laguerre(int n);

} // namespace randctl
