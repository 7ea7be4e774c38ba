#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace smartmon {

struct MvnResult {
    double value = 0.0;
    double error = 0.0;  // 3 standard errors across random shifts
    long points = 0;
};

// P(X <= upper) for X ~ N(mean, cov). Randomized lattice rule over the separation-of-variables
// integrand with variable reordering; positive semidefinite covariances are supported.
MvnResult mvn_rectangle(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& upper,
                        double tol = 1e-4, std::uint64_t seed = 20240917);

double normal_cdf(double x);
double normal_quantile(double p);

}  // namespace smartmon
