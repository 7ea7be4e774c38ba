#include "smartmon/quadrature.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "smartmon/error.hpp"

namespace smartmon {

namespace {

// Jacobi matrix with zero diagonal and the given off-diagonal; weights scale by mu0.
QuadRule golub_welsch(const std::vector<double>& offdiag, double mu0) {
    const int n = static_cast<int>(offdiag.size()) + 1;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) J(i, i + 1) = J(i + 1, i) = offdiag[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    QuadRule q;
    for (int i = 0; i < n; ++i) {
        q.nodes.push_back(es.eigenvalues()(i));
        double v = es.eigenvectors()(0, i);
        q.weights.push_back(mu0 * v * v);
    }
    return q;
}

}  // namespace

QuadRule gauss_hermite_normal(int n) {
    if (n < 1) throw ValidationError("quadrature needs at least one node");
    // Probabilists' Hermite: beta_i = sqrt(i).
    std::vector<double> off;
    for (int i = 1; i < n; ++i) off.push_back(std::sqrt(static_cast<double>(i)));
    return golub_welsch(off, 1.0);
}

QuadRule gauss_legendre_uniform(int n, double lo, double hi) {
    if (n < 1) throw ValidationError("quadrature needs at least one node");
    std::vector<double> off;
    for (int i = 1; i < n; ++i) off.push_back(i / std::sqrt(4.0 * i * i - 1.0));
    QuadRule q = golub_welsch(off, 1.0);  // weights sum to 1: mean over [-1,1]
    for (auto& x : q.nodes) x = lo + (hi - lo) * (x + 1.0) / 2.0;
    return q;
}

}  // namespace smartmon
