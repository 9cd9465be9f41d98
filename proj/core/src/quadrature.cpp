#include "randctl/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace randctl {

namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights are
// mu0 times the squared first component of each normalized eigenvector.
QuadratureRule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag, double mu0) {
    const Eigen::Index n = diag.size();
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        jacobi(i, i) = diag(i);
        if (i + 1 < n) {
            jacobi(i, i + 1) = offdiag(i);
            jacobi(i + 1, i) = offdiag(i);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    QuadratureRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v0 = solver.eigenvectors()(0, i);
        rule.nodes[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
        rule.weights[static_cast<std::size_t>(i)] = mu0 * v0 * v0;
    }
    return rule;
}

void require_positive(int n) {
    if (n < 1) {
        throw std::invalid_argument("quadrature order must be >= 1");
    }
}

} // namespace

QuadratureRule gauss_legendre(int n, double lo, double hi) {
    require_positive(n);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(std::max(n - 1, 0));
    for (int k = 1; k < n; ++k) {
        off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
    }
    QuadratureRule rule = golub_welsch(diag, off, 2.0);
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        rule.nodes[i] = mid + half * rule.nodes[i];
        rule.weights[i] *= half;
    }
    return rule;
}

QuadratureRule gauss_hermite_normal(int n) {
    require_positive(n);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(std::max(n - 1, 0));
    for (int k = 1; k < n; ++k) {
        off(k - 1) = std::sqrt(static_cast<double>(k));
    }
    QuadratureRule rule = golub_welsch(diag, off, 1.0);
    // Symmetrize: the law is symmetric and round-off otherwise leaks into odd moments.
    const std::size_t m = rule.nodes.size();
    for (std::size_t i = 0; i < m / 2; ++i) {
        const double node = 0.5 * (rule.nodes[m - 1 - i] - rule.nodes[i]);
        const double weight = 0.5 * (rule.weights[i] + rule.weights[m - 1 - i]);
        rule.nodes[i] = -node;
        rule.nodes[m - 1 - i] = node;
        rule.weights[i] = weight;
        rule.weights[m - 1 - i] = weight;
    }
    if (m % 2 == 1) {
        rule.nodes[m / 2] = 0.0;
    }
    return rule;
}

QuadratureRule gauss_laguerre(int n) {
    require_positive(n);
    Eigen::VectorXd diag(n);
    Eigen::VectorXd off(std::max(n - 1, 0));
    for (int k = 0; k < n; ++k) {
        diag(k) = 2.0 * k + 1.0;
        if (k + 1 < n) {
            off(k) = k + 1.0;
        }
    }
    return golub_welsch(diag, off, 1.0);
}

} // namespace randctl
